/**
 * SVG chart for the what-if panel, generated as a plain string so it can be
 * rendered server-free and unit-tested without a DOM.
 *
 * Layout: 2 h of history on the left of the meal line, then the 8 predicted
 * means with a 95% band (mean +- 1.96 sigma), the stepped dashed target
 * profile, and the recommendation marker in the bolus lane below.
 */

import type { TrajectoryV1 } from "./types";

export interface ChartInput {
  history: number[]; // 8 readings at -105..0 min
  prediction: TrajectoryV1 | null;
  target: number[]; // 8 target values over the horizon
  recommendedBolus: number | null;
  candidateBolus: number;
  uMax: number;
}

export interface ChartOptions {
  width?: number;
  height?: number;
  yMin?: number;
  yMax?: number;
}

const HISTORY_MINUTES = [-105, -90, -75, -60, -45, -30, -15, 0];

function fmt(v: number): string {
  return Number.isInteger(v) ? v.toString() : v.toFixed(2);
}

export function renderChart(input: ChartInput, options: ChartOptions = {}): string {
  const width = options.width ?? 680;
  const height = options.height ?? 340;
  const padL = 42;
  const padR = 12;
  const padT = 10;
  const glucoseH = height - 90;

  const horizon = input.prediction ? input.prediction.means.length : 8;
  const stepMin = input.prediction ? input.prediction.spacing_minutes : 15;
  const tMin = HISTORY_MINUTES[0];
  const tMax = horizon * stepMin;

  const values = [
    ...input.history,
    ...(input.prediction ? input.prediction.means : []),
    ...input.target,
  ];
  const sds = input.prediction ? input.prediction.variances.map((v) => Math.sqrt(v)) : [];
  const bandLow = input.prediction
    ? input.prediction.means.map((m, i) => m - 1.96 * sds[i])
    : [];
  const bandHigh = input.prediction
    ? input.prediction.means.map((m, i) => m + 1.96 * sds[i])
    : [];
  const yMin = options.yMin ?? Math.min(50, Math.floor(Math.min(...values, ...bandLow, 70) / 10) * 10);
  const yMax = options.yMax ?? Math.max(220, Math.ceil(Math.max(...values, ...bandHigh, 180) / 10) * 10);

  const x = (t: number) => padL + ((t - tMin) / (tMax - tMin)) * (width - padL - padR);
  const y = (g: number) => padT + (1 - (g - yMin) / (yMax - yMin)) * glucoseH;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" ` +
      `font-family="sans-serif" font-size="10">`,
  );

  // range guides
  for (const guide of [70, 180]) {
    parts.push(
      `<line class="guide" x1="${padL}" y1="${y(guide)}" x2="${width - padR}" ` +
        `y2="${y(guide)}" stroke="#9c9" stroke-dasharray="2,3"/>`,
    );
    parts.push(`<text x="2" y="${y(guide) + 3}" fill="#696">${guide}</text>`);
  }
  // meal line at t = 0
  parts.push(
    `<line class="meal-line" x1="${x(0)}" y1="${padT}" x2="${x(0)}" ` +
      `y2="${padT + glucoseH}" stroke="#bbb"/>`,
  );

  // history polyline
  const histPts = input.history
    .map((g, i) => `${fmt(x(HISTORY_MINUTES[i]))},${fmt(y(g))}`)
    .join(" ");
  parts.push(`<polyline class="history" points="${histPts}" fill="none" stroke="#334" stroke-width="1.5"/>`);

  if (input.prediction) {
    const times = input.prediction.means.map((_, i) => (i + 1) * stepMin);
    // 95% band: upper path forward, lower path back
    const upper = times.map((t, i) => `${fmt(x(t))},${fmt(y(bandHigh[i]))}`);
    const lower = times
      .slice()
      .reverse()
      .map((t, iRev) => {
        const i = times.length - 1 - iRev;
        return `${fmt(x(t))},${fmt(y(bandLow[i]))}`;
      });
    parts.push(
      `<polygon class="band" points="${[...upper, ...lower].join(" ")}" ` +
        `fill="#7799dd" opacity="0.25"/>`,
    );
    const meanPts = times
      .map((t, i) => `${fmt(x(t))},${fmt(y(input.prediction!.means[i]))}`)
      .join(" ");
    parts.push(
      `<polyline class="prediction" points="${meanPts}" fill="none" stroke="#2255cc" stroke-width="2"/>`,
    );
  }

  // stepped dashed target profile
  const stepPts: string[] = [];
  input.target.forEach((g, i) => {
    const t0 = i * stepMin;
    const t1 = (i + 1) * stepMin;
    stepPts.push(`${i === 0 ? "M" : "L"}${fmt(x(t0))} ${fmt(y(g))}`);
    stepPts.push(`L${fmt(x(t1))} ${fmt(y(g))}`);
  });
  parts.push(
    `<path class="target" d="${stepPts.join(" ")}" fill="none" stroke="#888" ` +
      `stroke-dasharray="5,4"/>`,
  );

  // bolus lane
  const laneY = padT + glucoseH + 28;
  const laneX = (u: number) => padL + (u / input.uMax) * (width - padL - padR);
  parts.push(
    `<line class="bolus-axis" x1="${padL}" y1="${laneY}" x2="${width - padR}" y2="${laneY}" stroke="#aaa"/>`,
  );
  parts.push(`<text x="2" y="${laneY + 3}">U</text>`);
  parts.push(
    `<circle class="candidate-marker" cx="${fmt(laneX(input.candidateBolus))}" cy="${laneY}" r="4" fill="#777"/>`,
  );
  if (input.recommendedBolus !== null) {
    const cx = laneX(input.recommendedBolus);
    parts.push(
      `<g class="bolus-marker" data-final-bolus="${input.recommendedBolus}">` +
        `<line x1="${fmt(cx)}" y1="${laneY - 10}" x2="${fmt(cx)}" y2="${laneY + 10}" ` +
        `stroke="#c22" stroke-width="2"/>` +
        `<text x="${fmt(cx + 4)}" y="${laneY - 12}" fill="#c22">` +
        `${input.recommendedBolus.toFixed(2)} U</text></g>`,
    );
  }

  parts.push("</svg>");
  return parts.join("");
}

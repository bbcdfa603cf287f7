/**
 * v1 API client plus the slider-request scheduler.
 *
 * The scheduler turns continuous slider motion into exactly one /predict
 * per settled position: motion restarts a quiet-period timer; when it
 * fires, one sequence-numbered request goes out, and any response that is
 * not the newest issued sequence is discarded.
 */

import type {
  ConfigV1,
  DoseEntry,
  FieldError,
  ModelInfoV1,
  RecommendationV1,
  TrajectoryV1,
} from "./types";

export class ApiError extends Error {
  status: number;
  errors: FieldError[];

  constructor(status: number, errors: FieldError[]) {
    super(`request failed (${status}): ${errors.map((e) => `${e.field}: ${e.message}`).join("; ")}`);
    this.status = status;
    this.errors = errors;
  }
}

interface FetchResponse {
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<FetchResponse>;

export interface PredictRequest {
  window: number[];
  bolus: number;
  carbs?: number | null;
}

export interface RecommendRequest {
  window: number[];
  carbs?: number | null;
  history?: DoseEntry[];
  seed?: number;
  now?: number;
}

async function parseOrThrow<T>(res: FetchResponse): Promise<T> {
  const body = (await res.json()) as Record<string, unknown>;
  if (res.status >= 400) {
    const errors = (body.errors as FieldError[] | undefined) ?? [
      { field: "", message: `status ${res.status}` },
    ];
    throw new ApiError(res.status, errors);
  }
  return body as T;
}

export class ApiClient {
  private base: string;
  private fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.fetchFn(`${this.base}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    }).then((res) => parseOrThrow<T>(res));
  }

  private get<T>(path: string): Promise<T> {
    return this.fetchFn(`${this.base}${path}`).then((res) => parseOrThrow<T>(res));
  }

  predict(req: PredictRequest): Promise<TrajectoryV1> {
    const payload: Record<string, unknown> = { window: req.window, bolus: req.bolus };
    if (req.carbs !== null && req.carbs !== undefined) payload.carbs = req.carbs;
    return this.post("/predict", payload);
  }

  recommend(req: RecommendRequest): Promise<RecommendationV1> {
    const payload: Record<string, unknown> = { window: req.window };
    if (req.carbs !== null && req.carbs !== undefined) payload.carbs = req.carbs;
    if (req.history?.length) payload.history = req.history;
    if (req.seed !== undefined) payload.seed = req.seed;
    if (req.now !== undefined) payload.now = req.now;
    return this.post("/recommend", payload);
  }

  config(): Promise<ConfigV1> {
    return this.get("/config");
  }

  model(): Promise<ModelInfoV1> {
    return this.get("/model");
  }
}

/** One in-flight concern per control: debounce to the settled position,
 * sequence-number the requests, drop anything stale. */
export class PredictScheduler {
  private run: (bolus: number) => Promise<TrajectoryV1>;
  private apply: (t: TrajectoryV1) => void;
  private onError: (err: unknown) => void;
  private settleMs: number;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private seq = 0;
  private issuedCount = 0;
  private appliedCount = 0;
  private droppedCount = 0;

  constructor(
    run: (bolus: number) => Promise<TrajectoryV1>,
    apply: (t: TrajectoryV1) => void,
    settleMs = 150,
    onError: (err: unknown) => void = () => {},
  ) {
    this.run = run;
    this.apply = apply;
    this.settleMs = settleMs;
    this.onError = onError;
  }

  /** Call on every slider motion; fires one request per settled position. */
  move(bolus: number): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      this.issue(bolus);
    }, this.settleMs);
  }

  /** Immediate issue (e.g. explicit input commit), same staleness rules. */
  issue(bolus: number): void {
    const mySeq = ++this.seq;
    this.issuedCount += 1;
    this.run(bolus).then(
      (t) => {
        if (mySeq === this.seq) {
          this.appliedCount += 1;
          this.apply(t);
        } else {
          this.droppedCount += 1;
        }
      },
      (err) => {
        if (mySeq === this.seq) this.onError(err);
      },
    );
  }

  get stats() {
    return { issued: this.issuedCount, applied: this.appliedCount, dropped: this.droppedCount };
  }
}

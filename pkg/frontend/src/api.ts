/**
 * Typed client for the bench annotation API.
 *
 * Every request goes through an injectable fetch so tests can script
 * responses or count calls without a server.
 */

export const DIMENSIONS = [
  "creativity",
  "style",
  "relevance",
  "fluency",
  "overall",
] as const;

export type Dimension = (typeof DIMENSIONS)[number];
export type Verdict = "A" | "B" | "Tie";

/** A blind pair as served by GET /api/next-pair. No model identities. */
export interface PairView {
  comparison_id: string;
  instruction: string;
  response_a: string;
  response_b: string;
  dimension: Dimension;
}

export interface VerdictSubmission {
  comparison_id: string;
  verdict: Verdict;
  dimension: Dimension;
  annotator: string;
}

export interface LeaderboardRow {
  model: string;
  rating: number;
  games: number;
}

export type SubmitResult =
  | { kind: "accepted" }
  | { kind: "duplicate"; detail: string };

/** Non-2xx response outside the statuses the UI knows how to handle. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: string,
  ) {
    super(`api error ${status}: ${body}`);
  }
}

export type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

/** What the session needs from a client; BenchClient is the real one. */
export interface BenchApi {
  fetchNextPair(annotator: string): Promise<PairView | null>;
  submitVerdict(submission: VerdictSubmission): Promise<SubmitResult>;
  fetchLeaderboard(dimension: Dimension): Promise<LeaderboardRow[]>;
}

export class BenchClient implements BenchApi {
  private readonly base: string;
  private readonly fetchFn: FetchFn;

  constructor(baseUrl: string, fetchFn?: FetchFn) {
    this.base = baseUrl.replace(/\/+$/, "");
    // bind so an injected window.fetch keeps its receiver
    const f = fetchFn ?? fetch;
    this.fetchFn = (url, init) => f(url, init);
  }

  /** Next unjudged pair for this annotator, or null when the queue is empty. */
  async fetchNextPair(annotator: string): Promise<PairView | null> {
    const url = `${this.base}/api/next-pair?annotator=${encodeURIComponent(annotator)}`;
    const res = await this.fetchFn(url);
    if (res.status === 404) {
      return null;
    }
    if (!res.ok) {
      throw new ApiError(res.status, await res.text());
    }
    return (await res.json()) as PairView;
  }

  /**
   * Submit one verdict. A 409 is an expected outcome (someone with the same
   * handle already judged this pair) and is returned, not thrown.
   */
  async submitVerdict(submission: VerdictSubmission): Promise<SubmitResult> {
    const res = await this.fetchFn(`${this.base}/api/verdict`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(submission),
    });
    if (res.status === 204) {
      return { kind: "accepted" };
    }
    if (res.status === 409) {
      const body = (await res.json()) as { detail?: string };
      return { kind: "duplicate", detail: body.detail ?? "already judged" };
    }
    throw new ApiError(res.status, await res.text());
  }

  async fetchLeaderboard(dimension: Dimension): Promise<LeaderboardRow[]> {
    const url = `${this.base}/api/leaderboard?dimension=${encodeURIComponent(dimension)}`;
    const res = await this.fetchFn(url);
    if (!res.ok) {
      throw new ApiError(res.status, await res.text());
    }
    return (await res.json()) as LeaderboardRow[];
  }
}

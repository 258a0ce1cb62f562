/** Shared fixtures and fakes for the UI tests. */

import type {
  BenchApi,
  Dimension,
  LeaderboardRow,
  PairView,
  SubmitResult,
  VerdictSubmission,
} from "../src/api.js";

export function pairView(i: number, dimension: Dimension = "overall"): PairView {
  return {
    comparison_id: `cmp-${String(i).padStart(4, "0")}`,
    instruction: `Write a short piece number ${i}.`,
    response_a: `First candidate text for pair ${i}.`,
    response_b: `Second candidate text for pair ${i}.`,
    dimension,
  };
}

export interface FakeBenchOptions {
  /** Pairs handed out in order; null-terminated queue (then empty state). */
  pairs?: PairView[];
  submitResult?: SubmitResult | (() => SubmitResult);
  /** Rejection used for every submit; wins over submitResult. */
  submitError?: Error;
  leaderboard?: LeaderboardRow[];
  leaderboardError?: Error;
  /** Delay submit resolution until release() is called. */
  holdSubmits?: boolean;
}

/** In-memory BenchApi that records every call. */
export class FakeBench implements BenchApi {
  readonly submitted: VerdictSubmission[] = [];
  readonly leaderboardCalls: Dimension[] = [];
  nextPairCalls = 0;

  /** Mutable so tests can flip behavior mid-run (e.g. restore connectivity). */
  readonly options: FakeBenchOptions;

  private readonly queue: PairView[];
  private releaseHeld: (() => void) | null = null;
  private heldWaiters: Array<() => void> = [];

  constructor(options: FakeBenchOptions = {}) {
    this.options = options;
    this.queue = [...(options.pairs ?? [])];
  }

  async fetchNextPair(_annotator: string): Promise<PairView | null> {
    this.nextPairCalls += 1;
    return this.queue.shift() ?? null;
  }

  async submitVerdict(submission: VerdictSubmission): Promise<SubmitResult> {
    if (this.options.submitError) {
      throw this.options.submitError;
    }
    this.submitted.push(submission);
    if (this.options.holdSubmits) {
      await new Promise<void>((resolve) => {
        this.releaseHeld = resolve;
        this.heldWaiters.forEach((waiter) => waiter());
        this.heldWaiters = [];
      });
    }
    const result = this.options.submitResult;
    if (typeof result === "function") {
      return result();
    }
    return result ?? { kind: "accepted" };
  }

  async fetchLeaderboard(dimension: Dimension): Promise<LeaderboardRow[]> {
    this.leaderboardCalls.push(dimension);
    if (this.options.leaderboardError) {
      throw this.options.leaderboardError;
    }
    return this.options.leaderboard ?? [];
  }

  /** Resolves once a held submit is actually waiting. */
  whenHeld(): Promise<void> {
    if (this.releaseHeld) {
      return Promise.resolve();
    }
    return new Promise((resolve) => this.heldWaiters.push(resolve));
  }

  /** Let a held submit finish. */
  release(): void {
    this.releaseHeld?.();
    this.releaseHeld = null;
  }
}

/** Minimal localStorage stand-in. */
export class MemoryStorage {
  private readonly map = new Map<string, string>();

  getItem(key: string): string | null {
    return this.map.get(key) ?? null;
  }

  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }
}

type Scripted = { status: number; body?: unknown; headers?: Record<string, string> };

/**
 * fetch stub driven by a URL-matched script. Each entry is consumed once,
 * in order, per matching prefix.
 */
export function scriptedFetch(script: Array<[string, Scripted]>) {
  const remaining = [...script];
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    const index = remaining.findIndex(([prefix]) => url.includes(prefix));
    if (index < 0) {
      throw new Error(`no scripted response for ${url}`);
    }
    const [, stub] = remaining.splice(index, 1)[0]!;
    const body =
      stub.body === undefined
        ? null
        : typeof stub.body === "string"
          ? stub.body
          : JSON.stringify(stub.body);
    return new Response(body, {
      status: stub.status,
      headers: stub.headers ?? { "content-type": "application/json" },
    });
  };
  return { fetchFn, calls };
}

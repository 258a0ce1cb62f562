/**
 * Session state for one annotator.
 *
 * All mutation funnels through a single promise chain so user actions are
 * serialized: a click that lands while a submission is in flight is dropped,
 * which is what makes double-clicks send exactly one request. The chain also
 * gives tests a `settle()` point to await.
 */

import {
  BenchApi,
  Dimension,
  LeaderboardRow,
  PairView,
  Verdict,
  VerdictSubmission,
} from "./api.js";
import { Rng } from "./rng.js";

export type Choice = "left" | "right" | "tie";

export type Screen =
  | { kind: "loading" }
  | { kind: "pair"; view: PairView; flipped: boolean }
  | { kind: "empty" }
  | { kind: "offline"; queued: number };

export interface SessionOptions {
  client: BenchApi;
  annotator: string;
  /** Coin-flip source for A/B display order. Defaults to Math.random. */
  rng?: Rng;
  onChange?: (session: AnnotationSession) => void;
}

/** True for fetch-level failures (server unreachable), not HTTP statuses. */
function isNetworkError(err: unknown): boolean {
  return err instanceof TypeError;
}

export class AnnotationSession {
  screen: Screen = { kind: "loading" };
  busy = false;
  /** Text of the 409 notice, cleared when the next pair renders. */
  conflict: string | null = null;
  leaderboard: LeaderboardRow[] = [];
  leaderboardError: string | null = null;
  dimension: Dimension = "overall";
  /** Verdicts the server acknowledged, oldest first. */
  readonly accepted: VerdictSubmission[] = [];

  private readonly client: BenchApi;
  private readonly annotator: string;
  private readonly rng: Rng;
  private readonly onChange: (session: AnnotationSession) => void;
  private readonly retryQueue: VerdictSubmission[] = [];
  private chain: Promise<void> = Promise.resolve();

  constructor(options: SessionOptions) {
    this.client = options.client;
    this.annotator = options.annotator;
    this.rng = options.rng ?? Math.random;
    this.onChange = options.onChange ?? (() => undefined);
  }

  /** Resolves once every action enqueued so far has finished. */
  settle(): Promise<void> {
    return this.chain;
  }

  queuedCount(): number {
    return this.retryQueue.length;
  }

  start(): void {
    this.enqueue(async () => {
      await this.refreshLeaderboard();
      await this.loadNextPair();
    });
  }

  /**
   * Judge the displayed pair. Returns false when the action was dropped
   * (nothing displayed, or a submission already in flight).
   */
  choose(choice: Choice): boolean {
    if (this.busy || this.screen.kind !== "pair") {
      return false;
    }
    const { view, flipped } = this.screen;
    this.busy = true;
    this.enqueue(async () => {
      try {
        await this.submit({
          comparison_id: view.comparison_id,
          verdict: verdictFor(choice, flipped),
          dimension: view.dimension,
          annotator: this.annotator,
        });
      } finally {
        this.busy = false;
      }
    });
    return true;
  }

  /** Flush queued verdicts, then pull the next pair. */
  retry(): void {
    this.enqueue(async () => {
      while (this.retryQueue.length > 0) {
        const pending = this.retryQueue[0]!;
        try {
          await this.client.submitVerdict(pending);
        } catch (err) {
          if (isNetworkError(err)) {
            this.screen = { kind: "offline", queued: this.retryQueue.length };
            return;
          }
          throw err;
        }
        this.retryQueue.shift();
        this.accepted.push(pending);
      }
      await this.refreshLeaderboard();
      await this.loadNextPair();
    });
  }

  setDimension(dimension: Dimension): void {
    this.enqueue(async () => {
      this.dimension = dimension;
      await this.refreshLeaderboard();
    });
  }

  private async submit(submission: VerdictSubmission): Promise<void> {
    let result;
    try {
      result = await this.client.submitVerdict(submission);
    } catch (err) {
      if (isNetworkError(err)) {
        this.retryQueue.push(submission);
        this.screen = { kind: "offline", queued: this.retryQueue.length };
        return;
      }
      throw err;
    }
    if (result.kind === "duplicate") {
      this.conflict = result.detail;
    } else {
      this.conflict = null;
      this.accepted.push(submission);
    }
    await this.refreshLeaderboard();
    await this.loadNextPair();
  }

  private async loadNextPair(): Promise<void> {
    let view: PairView | null;
    try {
      view = await this.client.fetchNextPair(this.annotator);
    } catch (err) {
      if (isNetworkError(err)) {
        this.screen = { kind: "offline", queued: this.retryQueue.length };
        return;
      }
      throw err;
    }
    this.screen = view
      ? { kind: "pair", view, flipped: this.rng() < 0.5 }
      : { kind: "empty" };
  }

  private async refreshLeaderboard(): Promise<void> {
    try {
      this.leaderboard = await this.client.fetchLeaderboard(this.dimension);
      this.leaderboardError = null;
    } catch {
      // keep the last good rows; the annotation flow must not stall on this
      this.leaderboardError = "leaderboard unavailable";
    }
  }

  private enqueue(task: () => Promise<void>): void {
    this.chain = this.chain
      .then(task)
      .catch((err) => {
        this.screen = { kind: "offline", queued: this.retryQueue.length };
        console.error("annotation session error:", err);
      })
      .then(() => this.onChange(this));
  }
}

/**
 * Map a screen-position choice back to the server's A/B labels.
 * When the view is flipped, the left panel is showing response_b.
 */
export function verdictFor(choice: Choice, flipped: boolean): Verdict {
  if (choice === "tie") {
    return "Tie";
  }
  const pickedLeft = choice === "left";
  return pickedLeft !== flipped ? "A" : "B";
}

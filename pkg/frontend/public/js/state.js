/**
 * Session state for one annotator.
 *
 * All mutation funnels through a single promise chain so user actions are
 * serialized: a click that lands while a submission is in flight is dropped,
 * which is what makes double-clicks send exactly one request. The chain also
 * gives tests a `settle()` point to await.
 */
/** True for fetch-level failures (server unreachable), not HTTP statuses. */
function isNetworkError(err) {
    return err instanceof TypeError;
}
export class AnnotationSession {
    constructor(options) {
        this.screen = { kind: "loading" };
        this.busy = false;
        /** Text of the 409 notice, cleared when the next pair renders. */
        this.conflict = null;
        this.leaderboard = [];
        this.leaderboardError = null;
        this.dimension = "overall";
        /** Verdicts the server acknowledged, oldest first. */
        this.accepted = [];
        this.retryQueue = [];
        this.chain = Promise.resolve();
        this.client = options.client;
        this.annotator = options.annotator;
        this.rng = options.rng ?? Math.random;
        this.onChange = options.onChange ?? (() => undefined);
    }
    /** Resolves once every action enqueued so far has finished. */
    settle() {
        return this.chain;
    }
    queuedCount() {
        return this.retryQueue.length;
    }
    start() {
        this.enqueue(async () => {
            await this.refreshLeaderboard();
            await this.loadNextPair();
        });
    }
    /**
     * Judge the displayed pair. Returns false when the action was dropped
     * (nothing displayed, or a submission already in flight).
     */
    choose(choice) {
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
            }
            finally {
                this.busy = false;
            }
        });
        return true;
    }
    /** Flush queued verdicts, then pull the next pair. */
    retry() {
        this.enqueue(async () => {
            while (this.retryQueue.length > 0) {
                const pending = this.retryQueue[0];
                try {
                    await this.client.submitVerdict(pending);
                }
                catch (err) {
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
    setDimension(dimension) {
        this.enqueue(async () => {
            this.dimension = dimension;
            await this.refreshLeaderboard();
        });
    }
    async submit(submission) {
        let result;
        try {
            result = await this.client.submitVerdict(submission);
        }
        catch (err) {
            if (isNetworkError(err)) {
                this.retryQueue.push(submission);
                this.screen = { kind: "offline", queued: this.retryQueue.length };
                return;
            }
            throw err;
        }
        if (result.kind === "duplicate") {
            this.conflict = result.detail;
        }
        else {
            this.conflict = null;
            this.accepted.push(submission);
        }
        await this.refreshLeaderboard();
        await this.loadNextPair();
    }
    async loadNextPair() {
        let view;
        try {
            view = await this.client.fetchNextPair(this.annotator);
        }
        catch (err) {
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
    async refreshLeaderboard() {
        try {
            this.leaderboard = await this.client.fetchLeaderboard(this.dimension);
            this.leaderboardError = null;
        }
        catch {
            // keep the last good rows; the annotation flow must not stall on this
            this.leaderboardError = "leaderboard unavailable";
        }
    }
    enqueue(task) {
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
export function verdictFor(choice, flipped) {
    if (choice === "tie") {
        return "Tie";
    }
    const pickedLeft = choice === "left";
    return pickedLeft !== flipped ? "A" : "B";
}

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
];
/** Non-2xx response outside the statuses the UI knows how to handle. */
export class ApiError extends Error {
    constructor(status, body) {
        super(`api error ${status}: ${body}`);
        this.status = status;
        this.body = body;
    }
}
export class BenchClient {
    constructor(baseUrl, fetchFn) {
        this.base = baseUrl.replace(/\/+$/, "");
        // bind so an injected window.fetch keeps its receiver
        const f = fetchFn ?? fetch;
        this.fetchFn = (url, init) => f(url, init);
    }
    /** Next unjudged pair for this annotator, or null when the queue is empty. */
    async fetchNextPair(annotator) {
        const url = `${this.base}/api/next-pair?annotator=${encodeURIComponent(annotator)}`;
        const res = await this.fetchFn(url);
        if (res.status === 404) {
            return null;
        }
        if (!res.ok) {
            throw new ApiError(res.status, await res.text());
        }
        return (await res.json());
    }
    /**
     * Submit one verdict. A 409 is an expected outcome (someone with the same
     * handle already judged this pair) and is returned, not thrown.
     */
    async submitVerdict(submission) {
        const res = await this.fetchFn(`${this.base}/api/verdict`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify(submission),
        });
        if (res.status === 204) {
            return { kind: "accepted" };
        }
        if (res.status === 409) {
            const body = (await res.json());
            return { kind: "duplicate", detail: body.detail ?? "already judged" };
        }
        throw new ApiError(res.status, await res.text());
    }
    async fetchLeaderboard(dimension) {
        const url = `${this.base}/api/leaderboard?dimension=${encodeURIComponent(dimension)}`;
        const res = await this.fetchFn(url);
        if (!res.ok) {
            throw new ApiError(res.status, await res.text());
        }
        return (await res.json());
    }
}

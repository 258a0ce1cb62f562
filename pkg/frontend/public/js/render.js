/**
 * DOM painting. Every piece of server text lands via textContent, never
 * markup, so response bodies cannot inject elements and the page never
 * contains anything the payload did not say out loud.
 */
import { DIMENSIONS } from "./api.js";
function el(doc, tag, className, text) {
    const node = doc.createElement(tag);
    if (className) {
        node.className = className;
    }
    if (text !== undefined) {
        node.textContent = text;
    }
    return node;
}
function choiceButton(doc, choice, label) {
    const button = el(doc, "button", "choice", label);
    button.dataset.choice = choice;
    return button;
}
function renderPairArea(area, screen) {
    const doc = area.ownerDocument;
    area.replaceChildren();
    switch (screen.kind) {
        case "loading":
            area.append(el(doc, "p", "status", "loading..."));
            return;
        case "empty":
            area.append(el(doc, "p", "status empty", "No pairs pending. You are done for now."));
            return;
        case "offline": {
            const note = screen.queued > 0
                ? `Connection lost. ${screen.queued} verdict(s) queued for retry.`
                : "Connection lost.";
            area.append(el(doc, "p", "status offline", note));
            const retry = el(doc, "button", "retry", "Retry");
            retry.dataset.action = "retry";
            area.append(retry);
            return;
        }
        case "pair": {
            const { view, flipped } = screen;
            const left = flipped ? view.response_b : view.response_a;
            const right = flipped ? view.response_a : view.response_b;
            const head = el(doc, "div", "task");
            head.append(el(doc, "span", "dimension", `judging: ${view.dimension}`));
            head.append(el(doc, "p", "instruction", view.instruction));
            area.append(head);
            const panels = el(doc, "div", "panels");
            for (const [side, text] of [["left", left], ["right", right]]) {
                const panel = el(doc, "section", `panel ${side}`);
                panel.append(el(doc, "h2", undefined, side === "left" ? "Left" : "Right"));
                panel.append(el(doc, "pre", "response", text));
                panels.append(panel);
            }
            area.append(panels);
            const controls = el(doc, "div", "controls");
            controls.append(choiceButton(doc, "left", "Left is better (←)"));
            controls.append(choiceButton(doc, "tie", "Tie (↓)"));
            controls.append(choiceButton(doc, "right", "Right is better (→)"));
            area.append(controls);
            return;
        }
    }
}
function renderLeaderboard(table, rows, status, error) {
    const doc = table.ownerDocument;
    const body = table.querySelector("tbody");
    if (!body) {
        throw new Error("leaderboard table is missing its tbody");
    }
    body.replaceChildren();
    for (const row of rows) {
        const tr = doc.createElement("tr");
        tr.append(el(doc, "td", "model", row.model));
        const rating = el(doc, "td", "rating", row.rating.toFixed(1));
        rating.dataset.rating = String(row.rating);
        tr.append(rating);
        tr.append(el(doc, "td", "games", String(row.games)));
        body.append(tr);
    }
    status.textContent = error ?? (rows.length === 0 ? "no verdicts yet" : "");
}
/** Fill the dimension <select> once at startup. */
export function populateDimensionSelect(select) {
    const doc = select.ownerDocument;
    select.replaceChildren();
    for (const dim of DIMENSIONS) {
        const option = doc.createElement("option");
        option.value = dim;
        option.textContent = dim;
        select.append(option);
    }
    select.value = "overall";
}
/** Paint the whole app from session state. Idempotent; called on every change. */
export function renderApp(root, session) {
    const area = root.querySelector("#pair-area");
    const banner = root.querySelector("#conflict-banner");
    const table = root.querySelector("#leaderboard");
    const status = root.querySelector("#leaderboard-status");
    if (!area || !banner || !table || !status) {
        throw new Error("annotation markup is missing a required element");
    }
    renderPairArea(area, session.screen);
    banner.hidden = session.conflict === null;
    banner.textContent = session.conflict ?? "";
    renderLeaderboard(table, session.leaderboard, status, session.leaderboardError);
}

/**
 * App wiring: annotator handle, keyboard shortcuts, event delegation.
 *
 * Everything external (document, fetch, rng, storage) is injectable, which is
 * how the tests run the real app against a real server without a browser.
 */
import { BenchClient } from "./api.js";
import { AnnotationSession } from "./state.js";
import { populateDimensionSelect, renderApp } from "./render.js";
const HANDLE_KEY = "annotator-handle";
const KEY_TO_CHOICE = {
    ArrowLeft: "left",
    ArrowRight: "right",
    ArrowDown: "tie",
};
// duck-typed instead of instanceof Element: the app also runs inside DOM
// emulators whose classes are not this realm's globals
function asElement(target) {
    const maybe = target;
    return maybe && typeof maybe.closest === "function" ? maybe : null;
}
function isTypingTarget(target) {
    const tag = asElement(target)?.tagName;
    return tag === "INPUT" || tag === "TEXTAREA" || tag === "SELECT";
}
export function startApp(config = {}) {
    const doc = config.doc ?? document;
    const storage = config.storage ?? doc.defaultView.localStorage;
    const client = new BenchClient(config.baseUrl ?? "", config.fetchFn);
    const handleForm = doc.querySelector("#handle-form");
    const handleInput = doc.querySelector("#handle-input");
    const handleSave = doc.querySelector("#handle-save");
    const handleLabel = doc.querySelector("#annotator-label");
    const dimensionSelect = doc.querySelector("#dimension-select");
    if (!handleForm || !handleInput || !handleSave || !handleLabel || !dimensionSelect) {
        throw new Error("annotation markup is missing a required element");
    }
    populateDimensionSelect(dimensionSelect);
    const app = {
        session: null,
        annotator: null,
        settle: () => (app.session ? app.session.settle() : Promise.resolve()),
    };
    function begin(annotator) {
        app.annotator = annotator;
        handleForm.hidden = true;
        handleLabel.textContent = annotator;
        const session = new AnnotationSession({
            client,
            annotator,
            rng: config.rng,
            onChange: (s) => renderApp(doc, s),
        });
        app.session = session;
        session.start();
    }
    handleSave.addEventListener("click", () => {
        const handle = handleInput.value.trim();
        if (handle === "") {
            handleInput.focus();
            return;
        }
        storage.setItem(HANDLE_KEY, handle);
        begin(handle);
    });
    doc.addEventListener("keydown", (event) => {
        if (isTypingTarget(event.target)) {
            return;
        }
        const choice = KEY_TO_CHOICE[event.key];
        if (choice && app.session) {
            app.session.choose(choice);
        }
    });
    doc.addEventListener("click", (event) => {
        const target = asElement(event.target);
        if (!target || !app.session) {
            return;
        }
        const choiceButton = target.closest("[data-choice]");
        if (choiceButton) {
            app.session.choose(choiceButton.dataset.choice);
            return;
        }
        if (target.closest("[data-action='retry']")) {
            app.session.retry();
        }
    });
    dimensionSelect.addEventListener("change", () => {
        app.session?.setDimension(dimensionSelect.value);
    });
    const saved = storage.getItem(HANDLE_KEY);
    if (saved) {
        begin(saved);
    }
    else {
        handleForm.hidden = false;
        handleInput.focus();
    }
    return app;
}

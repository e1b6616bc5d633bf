/**
 * DOM rendering. Renders exclusively fields present in task/slice payloads;
 * arms are only ever labeled "A" and "B".
 */
import type { RaterApp, AppState } from "./controller.js";
import type { Arm, RatingCategory, TargetClass } from "./types.js";
import { RATING_CATEGORIES } from "./types.js";

const CATEGORY_LABELS: Record<RatingCategory, string> = {
  optimal: "Optimal",
  too_big: "Too big",
  too_small: "Too small",
  wrong_organ: "Wrong organ",
  false_negative: "False negative",
  false_positive: "False positive",
  true_negative: "True negative",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    node.setAttribute(k, v);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

function pngSrc(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

export function mount(root: HTMLElement, app: RaterApp): void {
  app.onChange = (state) => render(root, app, state);
  document.addEventListener("keydown", (ev) => {
    void app.handleKey(ev.key);
  });
  render(root, app, app.state);
}

function render(root: HTMLElement, app: RaterApp, state: AppState): void {
  root.textContent = "";
  if (state.screen === "loading") {
    root.append(el("p", { class: "loading" }, ["Loading…"]));
    return;
  }
  if (state.screen === "done") {
    const pct =
      state.progress.total === 0
        ? 100
        : Math.round((100 * state.progress.position) / state.progress.total);
    root.append(
      el("div", { class: "done-screen" }, [
        el("h2", {}, ["Assignment complete"]),
        el("p", { class: "progress", "data-testid": "progress" }, [`Progress: ${pct}%`]),
        el("button", { id: "back", "data-testid": "back" }, ["Back"]),
      ]),
    );
    byId(root, "back").addEventListener("click", () => void app.prev());
    return;
  }

  const task = state.task!;
  const header = el("div", { class: "header" }, [
    el("span", { "data-testid": "patient" }, [`Patient ${task.patient_id}`]),
    el("span", { "data-testid": "slice" }, [
      ` — slice ${task.slice_index + 1}/${task.n_slices}`,
    ]),
    el("span", { class: "progress", "data-testid": "progress" }, [
      ` — task ${state.progress.position + 1} of ${state.progress.total}`,
    ]),
  ]);

  const overlayStyle = state.overlayVisible ? "" : "display:none";
  const panels = el("div", { class: "panels" }, [
    panel("A", task.images.base, task.images.overlay_a, overlayStyle),
    panel("B", task.images.base, task.images.overlay_b, overlayStyle),
  ]);

  const toggle = el("button", { id: "overlay-toggle", "data-testid": "overlay-toggle" }, [
    state.overlayVisible ? "Hide overlays" : "Show overlays",
  ]);
  toggle.addEventListener("click", () => app.toggleOverlay());

  const tabs = el(
    "div",
    { class: "class-tabs" },
    task.classes.map((cls) => {
      const button = el(
        "button",
        {
          class: `tab${state.classTab === cls ? " active" : ""}`,
          "data-testid": `tab-${cls}`,
        },
        [cls.toUpperCase()],
      );
      button.addEventListener("click", () => app.setClassTab(cls));
      return button;
    }),
  );

  const ratingGrid = el("div", { class: "rating-grid" }, [
    armColumn(app, state, "A"),
    armColumn(app, state, "B"),
  ]);

  const comparison = comparisonSection(app, state);

  const nav = el("div", { class: "nav" }, [
    el("button", { id: "prev", "data-testid": "prev" }, ["Previous"]),
    el("button", { id: "next", "data-testid": "next" }, ["Next"]),
  ]);
  byChild(nav, "prev").addEventListener("click", () => void app.prev());
  byChild(nav, "next").addEventListener("click", () => void app.next());

  const children: (Node | string)[] = [header, toggle, panels, tabs, ratingGrid, comparison, nav];
  if (state.notice) {
    children.push(el("p", { class: "notice", "data-testid": "notice" }, [state.notice]));
  }
  root.append(el("div", { class: "rater-app" }, children));
}

function panel(arm: Arm, base: string, overlay: string, overlayStyle: string): HTMLElement {
  return el("figure", { class: "panel", "data-arm": arm }, [
    el("figcaption", {}, [`Segmentation ${arm}`]),
    el("div", { class: "stack" }, [
      el("img", { class: "base", src: pngSrc(base), alt: `slice image` }),
      el("img", {
        class: "overlay",
        src: pngSrc(overlay),
        alt: `segmentation ${arm} overlay`,
        style: overlayStyle,
      }),
    ]),
  ]);
}

function armColumn(app: RaterApp, state: AppState, arm: Arm): HTMLElement {
  const cls: TargetClass = state.classTab;
  const current = state.slice.ratings[cls][arm];
  const buttons = RATING_CATEGORIES.map((category) => {
    const button = el(
      "button",
      {
        class: `category${current === category ? " selected" : ""}`,
        "data-testid": `rate-${arm}-${category}`,
      },
      [CATEGORY_LABELS[category]],
    );
    button.addEventListener("click", () => void app.rate(cls, arm, category));
    return button;
  });
  return el("div", { class: "arm-column", "data-arm": arm }, [
    el("h3", {}, [`Rate segmentation ${arm} (${cls})`]),
    ...buttons,
  ]);
}

function comparisonSection(app: RaterApp, state: AppState): HTMLElement {
  const cls = state.classTab;
  const status = app.comparisonStatus(cls);
  const heading = el("h3", {}, [`Which ${cls} segmentation do you agree with more?`]);
  if (status === "pending-arms") {
    return el("div", { class: "comparison", "data-testid": "comparison" }, [
      heading,
      el("p", { "data-testid": "comparison-status" }, ["Rate both segmentations first."]),
    ]);
  }
  if (status === "excluded") {
    return el("div", { class: "comparison excluded", "data-testid": "comparison" }, [
      heading,
      el("p", { "data-testid": "comparison-status" }, [
        "Skipped: both segmentations correctly show nothing.",
      ]),
    ]);
  }
  const current = state.slice.comparisons[cls];
  const options: [string, string][] = [
    ["A", "Segmentation A (1)"],
    ["B", "Segmentation B (2)"],
    ["equal", "Equally good (3)"],
  ];
  const buttons = options.map(([choice, label]) => {
    const button = el(
      "button",
      {
        class: `choice${current === choice ? " selected" : ""}`,
        "data-testid": `compare-${choice}`,
      },
      [label],
    );
    button.addEventListener("click", () => void app.compare(cls, choice as never));
    return button;
  });
  const note =
    status === "submitted"
      ? [el("p", { "data-testid": "comparison-status" }, [`Submitted: ${String(current)}`])]
      : [];
  return el("div", { class: "comparison", "data-testid": "comparison" }, [
    heading,
    ...buttons,
    ...note,
  ]);
}

function byId(root: HTMLElement, id: string): HTMLElement {
  const node = root.querySelector(`#${id}`);
  if (!node) throw new Error(`missing #${id}`);
  return node as HTMLElement;
}

function byChild(parent: HTMLElement, id: string): HTMLElement {
  const node = parent.querySelector(`#${id}`);
  if (!node) throw new Error(`missing #${id}`);
  return node as HTMLElement;
}

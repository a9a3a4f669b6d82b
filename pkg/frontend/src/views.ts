/** DOM rendering layer. All numbers shown come straight from API payloads;
 * the narration string is inserted with textContent so it stays verbatim.
 */

import {
  ApiClient,
  ApiError,
  CowDetail,
  ExplainResponse,
  FeatureRow,
  HerdResponse,
  HistoryPoint,
} from "./api.js";
import { formatDelta, formatScore, formatValue, sparklinePath } from "./format.js";
import { WhatIfController, WhatIfView, quantizeOverride } from "./whatif.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function classBadge(cls: string): HTMLElement {
  return el("span", `badge badge-${cls.toLowerCase()}`, cls);
}

export function renderBanner(root: HTMLElement, message: string,
                             onRetry: () => void): void {
  root.replaceChildren();
  const banner = el("div", "banner", message + " ");
  const retry = el("button", "retry", "Retry");
  retry.addEventListener("click", onRetry);
  banner.appendChild(retry);
  root.appendChild(banner);
}

export function renderHerd(root: HTMLElement, herd: HerdResponse,
                           onSelect: (cowId: string) => void): void {
  root.replaceChildren();
  root.appendChild(el("h1", undefined, "Herd risk"));
  if (herd.cows.length === 0) {
    root.appendChild(el("p", "empty-state", "No cows in the herd."));
    return;
  }
  const table = el("table", "herd-table");
  const head = el("tr");
  for (const title of ["Cow", "As of", "Risk", "Class"]) {
    head.appendChild(el("th", undefined, title));
  }
  table.appendChild(head);
  for (const cow of herd.cows) {
    const row = el("tr", "herd-row");
    row.dataset.cowId = cow.cow_id;
    row.appendChild(el("td", undefined, cow.cow_id));
    row.appendChild(el("td", undefined, cow.as_of_date));
    row.appendChild(el("td", "score", formatScore(cow.score)));
    const cell = el("td");
    cell.appendChild(classBadge(cow.class));
    row.appendChild(cell);
    row.addEventListener("click", () => onSelect(cow.cow_id));
    table.appendChild(row);
  }
  root.appendChild(table);
  root.appendChild(el("p", "model-hash", `model ${herd.model_hash.slice(0, 12)}`));
}

const SPARKLINE_SERIES: (keyof HistoryPoint)[] = [
  "yield", "fat_pct", "protein_pct", "lactose_pct", "scc", "urea",
];

function renderSparklines(detail: CowDetail): HTMLElement {
  const wrap = el("div", "sparklines");
  for (const key of SPARKLINE_SERIES) {
    const values = detail.history.map((h) => h[key] as number | null);
    const path = sparklinePath(values);
    const item = el("div", "sparkline");
    item.appendChild(el("span", "sparkline-label", String(key)));
    const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    svg.setAttribute("width", "120");
    svg.setAttribute("height", "24");
    if (path) {
      const p = document.createElementNS("http://www.w3.org/2000/svg", "path");
      p.setAttribute("d", path);
      p.setAttribute("fill", "none");
      p.setAttribute("stroke", "#369");
      svg.appendChild(p);
    }
    item.appendChild(svg);
    wrap.appendChild(item);
  }
  return wrap;
}

function renderGauge(view: WhatIfView, baseline: number): HTMLElement {
  const gauge = el("div", "gauge");
  const score = view.score ?? baseline;
  const bar = el("div", "gauge-bar");
  const fill = el("div", "gauge-fill");
  fill.style.width = `${Math.round(score * 100)}%`;
  bar.appendChild(fill);
  gauge.appendChild(bar);
  const label = el("span", "gauge-score", formatScore(score));
  if (view.pending) label.classList.add("pending");
  gauge.appendChild(label);
  if (view.cls) gauge.appendChild(classBadge(view.cls));
  if (view.error) gauge.appendChild(el("span", "gauge-error", view.error));
  return gauge;
}

function sliderRow(feature: FeatureRow,
                   controller: WhatIfController): HTMLElement {
  const row = el("tr", "feature-row");
  row.appendChild(el("td", undefined, feature.name));
  row.appendChild(el("td", "value", formatValue(feature.value)));
  row.appendChild(el("td", undefined, feature.unit));
  const cell = el("td", "slider-cell");
  if (feature.eligible) {
    const slider = el("input") as HTMLInputElement;
    slider.type = "range";
    slider.min = String(feature.lower_bound);
    slider.max = String(feature.upper_bound);
    slider.step = feature.min_change !== null
      ? String(feature.min_change) : "any";
    slider.value = String(feature.value);
    const readout = el("span", "slider-readout", formatValue(feature.value));
    slider.addEventListener("input", () => {
      const snapped = quantizeOverride(feature, Number(slider.value));
      slider.value = String(snapped);
      readout.textContent = formatValue(snapped);
      if (snapped === feature.value) {
        controller.clearOverride(feature.name);
      } else {
        controller.setOverride(feature.name, snapped);
      }
    });
    cell.appendChild(slider);
    cell.appendChild(readout);
  } else {
    cell.appendChild(el("span", "readonly",
                        feature.actionable ? "fixed" : "not actionable"));
  }
  row.appendChild(cell);
  return row;
}

function renderExplain(panel: HTMLElement, resp: ExplainResponse): void {
  panel.replaceChildren();
  if (resp.result.status !== "found") {
    panel.appendChild(el("p", "explain-empty",
                         "no actionable explanation found"));
    return;
  }
  const sentence = el("p", "narration");
  sentence.textContent = resp.narration ?? "";
  panel.appendChild(sentence);
  const table = el("table", "delta-table");
  const head = el("tr");
  for (const title of ["Feature", "Change", "Unit"]) {
    head.appendChild(el("th", undefined, title));
  }
  table.appendChild(head);
  for (const delta of resp.result.deltas) {
    const row = el("tr");
    row.appendChild(el("td", undefined, delta.feature));
    row.appendChild(el("td", undefined, formatDelta(delta)));
    row.appendChild(el("td", undefined, delta.unit));
    table.appendChild(row);
  }
  panel.appendChild(table);
  const before = formatScore(resp.result.score_original);
  const after = formatScore(resp.result.score_cf);
  panel.appendChild(el("p", "explain-scores",
                       `risk ${before} → ${after}`));
}

export function renderCow(root: HTMLElement, client: ApiClient,
                          detail: CowDetail, onBack: () => void): void {
  root.replaceChildren();
  const back = el("button", "back", "← herd");
  back.addEventListener("click", onBack);
  root.appendChild(back);

  const header = el("h1", undefined, `${detail.cow_id} `);
  header.appendChild(classBadge(detail.class));
  root.appendChild(header);
  root.appendChild(el("p", "as-of",
                      `as of ${detail.as_of_date}, risk ` +
                      formatScore(detail.score)));
  root.appendChild(renderSparklines(detail));

  const gaugeHost = el("div", "gauge-host");
  root.appendChild(gaugeHost);

  const controller = new WhatIfController(
    detail.cow_id, detail.score, detail.class,
    (cowId, overrides) => client.whatIf(cowId, overrides),
    (view) => {
      gaugeHost.replaceChildren(renderGauge(view, detail.score));
    },
  );

  const table = el("table", "feature-table");
  const head = el("tr");
  for (const title of ["Feature", "Value", "Unit", "What if"]) {
    head.appendChild(el("th", undefined, title));
  }
  table.appendChild(head);
  for (const feature of detail.features) {
    table.appendChild(sliderRow(feature, controller));
  }
  root.appendChild(table);

  const explainPanel = el("div", "explain-panel");
  const explainBtn = el("button", "explain", "Explain");
  explainBtn.addEventListener("click", async () => {
    explainBtn.disabled = true;
    explainPanel.replaceChildren(el("p", "explain-wait", "searching..."));
    try {
      renderExplain(explainPanel, await client.explain(detail.cow_id));
    } catch (err) {
      const message = err instanceof ApiError && err.status === 409
        ? "already at risk"
        : err instanceof ApiError ? err.body.message : String(err);
      explainPanel.replaceChildren(el("p", "explain-error", message));
    } finally {
      explainBtn.disabled = false;
    }
  });
  root.appendChild(explainBtn);
  root.appendChild(explainPanel);
}

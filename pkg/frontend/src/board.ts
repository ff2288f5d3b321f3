// DOM rendering. Pure functions from workspace state to elements so the
// view can always be rebuilt from API state alone.

import { Workspace } from "./state.js";
import { DocumentHit, TopicCard } from "./types.js";
import { ValidationIssue } from "./validate.js";

export function renderTopicCard(card: TopicCard): HTMLElement {
  const div = el("div", "topic-card");
  const head = el("div", "topic-head");
  head.appendChild(el("span", "topic-id", `topic ${card.topic}`));
  if (card.matched_group) {
    head.appendChild(el("span", "topic-group", card.matched_group));
  }
  div.appendChild(head);
  const maxProb = Math.max(...card.words.map((w) => w.prob), 1e-12);
  for (const w of card.words) {
    const row = el("div", "word-row");
    const bar = el("div", "word-bar");
    bar.style.width = `${(100 * w.prob) / maxProb}%`;
    const label = el(
      "span",
      card.shared_words.includes(w.word) ? "word shared" : "word",
      w.word,
    );
    label.title = card.shared_words.includes(w.word)
      ? "appears in another topic's top words"
      : `p = ${w.prob.toExponential(2)}`;
    row.appendChild(bar);
    row.appendChild(label);
    div.appendChild(row);
  }
  return div;
}

export function renderBoard(ws: Workspace, onDrill: (topic: number) => void): HTMLElement {
  const board = el("div", "board");
  for (const card of ws.topics) {
    const node = renderTopicCard(card);
    node.addEventListener("click", () => onDrill(card.topic));
    board.appendChild(node);
  }
  return board;
}

export function renderMetrics(metrics: Record<string, number>): HTMLElement {
  const panel = el("div", "metrics");
  for (const [key, value] of Object.entries(metrics)) {
    const row = el("div", "metric-row");
    row.appendChild(el("span", "metric-name", key));
    row.appendChild(el("span", "metric-value", value.toFixed(4)));
    panel.appendChild(row);
  }
  return panel;
}

export function renderBanner(ws: Workspace): HTMLElement {
  const div = el("div", `banner banner-${ws.banner.kind}`);
  div.appendChild(el("span", "banner-text", ws.banner.text || "ready"));
  if (ws.banner.kind === "running") {
    const bar = el("div", "banner-progress");
    bar.style.width = `${ws.banner.progress * 100}%`;
    div.appendChild(bar);
  }
  return div;
}

export function renderIssues(issues: ValidationIssue[]): HTMLElement {
  const div = el("div", "issues");
  for (const issue of issues) {
    const text =
      issue.reason === "unknown-word"
        ? `group ${issue.group}: "${issue.keyword}" is not in the vocabulary`
        : issue.reason === "empty-group"
          ? `group ${issue.group} is empty`
          : `group ${issue.group}: "${issue.keyword}" repeated`;
    div.appendChild(el("div", "issue", text));
  }
  return div;
}

export function renderDrilldown(topic: number, docs: DocumentHit[]): HTMLElement {
  const div = el("div", "drilldown");
  div.appendChild(el("h3", "", `top documents for topic ${topic}`));
  for (const doc of docs) {
    const row = el("div", "doc-row");
    row.appendChild(el("span", "doc-score", doc.score.toFixed(3)));
    row.appendChild(el("span", "doc-text", doc.text));
    div.appendChild(row);
  }
  return div;
}

function el(tag: string, cls: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

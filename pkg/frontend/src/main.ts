// Bootstrap: reads ?model=<id> (or the first model), wires the editor and
// fine-tune button, and keeps the whole view rebuildable from API state.

import { ApiClient } from "./api.js";
import {
  renderBanner,
  renderBoard,
  renderDrilldown,
  renderIssues,
  renderMetrics,
} from "./board.js";
import { refreshWorkspace, submitFinetune } from "./flow.js";
import { editKeyword, initialWorkspace, Workspace } from "./state.js";
import { parseKeywordInput } from "./validate.js";

const api = new ApiClient("");
let ws: Workspace;

async function resolveModelId(): Promise<string> {
  const fromUrl = new URLSearchParams(location.search).get("model");
  if (fromUrl) return fromUrl;
  const resp = await fetch("/models");
  const body = (await resp.json()) as { models: { model_id: string }[] };
  if (!body.models.length) {
    throw new Error("no models in the store; train one first");
  }
  return body.models[body.models.length - 1].model_id;
}

function redraw(issues = renderIssues([])): void {
  const root = document.getElementById("app")!;
  root.replaceChildren();
  root.appendChild(renderBanner(ws));

  const main = document.createElement("div");
  main.className = "columns";
  main.appendChild(
    renderBoard(ws, (topic) => {
      void api.getDocuments(ws.modelId, topic).then((resp) => {
        const panel = document.getElementById("drill")!;
        panel.replaceChildren(renderDrilldown(topic, resp.documents));
      });
    }),
  );

  const side = document.createElement("div");
  side.className = "side";
  side.appendChild(renderEditor());
  side.appendChild(issues);
  side.appendChild(renderMetrics(ws.metrics));
  const drill = document.createElement("div");
  drill.id = "drill";
  side.appendChild(drill);
  main.appendChild(side);
  root.appendChild(main);
}

function renderEditor(): HTMLElement {
  const editor = document.createElement("div");
  editor.className = "editor";
  const title = document.createElement("h3");
  title.textContent = ws.editorDirty ? "keyword groups (unsaved edits)" : "keyword groups";
  editor.appendChild(title);
  ws.editor.forEach((group, gi) => {
    const row = document.createElement("div");
    row.className = "editor-row";
    const label = document.createElement("label");
    label.textContent = group.name;
    const input = document.createElement("input");
    input.value = group.keywords.join(" ");
    input.addEventListener("change", () => {
      ws = editKeyword(ws, gi, parseKeywordInput(input.value));
      redraw();
    });
    row.appendChild(label);
    row.appendChild(input);
    editor.appendChild(row);
  });
  const button = document.createElement("button");
  button.textContent = "save + fine-tune";
  button.addEventListener("click", () => {
    void submitFinetune(api, ws, {
      onTick: () => redraw(),
    }).then((result) => {
      ws = result.workspace;
      redraw(renderIssues(result.issues));
    });
  });
  editor.appendChild(button);
  return editor;
}

async function boot(): Promise<void> {
  const modelId = await resolveModelId();
  ws = initialWorkspace(modelId);
  ws = await refreshWorkspace(api, ws);
  redraw();
}

void boot();

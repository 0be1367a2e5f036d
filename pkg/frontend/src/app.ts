/** Browser bootstrap: canvas, toolbar and keyboard wiring.
 *
 * Everything testable lives in the sibling modules; this file only adapts
 * them to the DOM.
 */

import { ReviewClient } from "./api.js";
import { renderSlice, brushEnabled, type DrawCommand } from "./render.js";
import { ViewState } from "./state.js";
import type { Phase, SlicePayload } from "./types.js";

const SCALE = 3;

async function decodePng(b64: string, w: number, h: number): Promise<Uint8ClampedArray> {
  const img = new Image();
  img.src = `data:image/png;base64,${b64}`;
  await img.decode();
  const canvas = document.createElement("canvas");
  canvas.width = w;
  canvas.height = h;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(img, 0, 0);
  const rgba = ctx.getImageData(0, 0, w, h).data;
  const gray = new Uint8ClampedArray(w * h);
  for (let i = 0; i < w * h; i++) gray[i] = rgba[i * 4];
  return gray;
}

function replay(ctx: CanvasRenderingContext2D, commands: DrawCommand[], banner: HTMLElement) {
  banner.textContent = "";
  for (const cmd of commands) {
    if (cmd.kind === "image") {
      const off = document.createElement("canvas");
      off.width = cmd.width;
      off.height = cmd.height;
      const pixels = new Uint8ClampedArray(cmd.rgba);
      off.getContext("2d")!.putImageData(new ImageData(pixels, cmd.width, cmd.height), 0, 0);
      ctx.canvas.width = cmd.width * SCALE;
      ctx.canvas.height = cmd.height * SCALE;
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(off, 0, 0, ctx.canvas.width, ctx.canvas.height);
    } else if (cmd.kind === "rect") {
      ctx.strokeStyle = cmd.color;
      ctx.lineWidth = 2;
      ctx.strokeRect(cmd.col0 * SCALE, cmd.row0 * SCALE, cmd.cols * SCALE, cmd.rows * SCALE);
    } else {
      banner.textContent = cmd.text;
    }
  }
}

export async function start(root: HTMLElement, baseUrl = ""): Promise<void> {
  const client = new ReviewClient(baseUrl);
  const cases = await client.listCases();
  if (cases.length === 0) {
    root.textContent = "no cases available";
    return;
  }

  const canvas = document.createElement("canvas");
  const banner = document.createElement("div");
  banner.className = "banner";
  const status = document.createElement("div");
  status.className = "status";
  const toolbar = document.createElement("div");
  toolbar.className = "toolbar";
  root.append(toolbar, banner, canvas, status);

  let view = new ViewState(cases[0].patient_id, "ED");
  let session: { session_id: string; version: number } | null = null;
  let gray: Uint8ClampedArray | null = null;
  let umap: Uint8ClampedArray | null = null;
  let payload: SlicePayload | null = null;

  const caseSelect = document.createElement("select");
  for (const c of cases) {
    const opt = document.createElement("option");
    opt.value = c.patient_id;
    opt.textContent = c.patient_id;
    caseSelect.append(opt);
  }
  const phaseButton = button("phase: ED", async () => {
    view.phase = view.phase === "ED" ? "ES" : "ED";
    phaseButton.textContent = `phase: ${view.phase}`;
    await openCase(view.caseId, view.phase as Phase);
  });
  const labelSelect = document.createElement("select");
  ["background", "RV", "LVM", "LV"].forEach((name, value) => {
    const opt = document.createElement("option");
    opt.value = String(value);
    opt.textContent = `paint: ${name}`;
    labelSelect.append(opt);
  });
  labelSelect.value = "3";
  labelSelect.onchange = () => (view.activeLabel = Number(labelSelect.value));

  const toggles = ["mask", "uncertainty", "flags"].map((name) =>
    button(`${name}: on`, async function (this: HTMLButtonElement) {
      const key = name as keyof typeof view.overlays;
      view.overlays[key] = !view.overlays[key];
      this.textContent = `${name}: ${view.overlays[key] ? "on" : "off"}`;
      draw();
    }),
  );
  toggles[1].textContent = "uncertainty: off";
  view.overlays.uncertainty = false;

  const submit = button("submit edits", async () => {
    if (!session) return;
    const batch = view.buildEditBatch();
    const result = await client.postEdits(session.session_id, batch, session.version);
    if (result.ok) {
      session.version = result.version!;
      view.clearPending();
      await refreshSlice();
      status.textContent = `edits accepted (v${session.version})`;
    } else if (result.queued) {
      status.textContent = "offline - edits queued, press retry";
    } else {
      status.textContent = `rejected (${result.status}): ${result.detail ?? ""}`;
    }
    draw();
  });
  const retry = button("retry queued", async () => {
    const delivered = await client.flushQueue();
    status.textContent = `retried: ${delivered} delivered`;
  });
  const finish = button("finish session", async () => {
    if (!session) return;
    const report = await client.submitSession(session.session_id);
    status.textContent = `submitted: LV dice ${report.after.LV.dice.toFixed(3)}`;
    session = null;
  });

  caseSelect.onchange = () => openCase(caseSelect.value, view.phase as Phase);
  toolbar.append(caseSelect, phaseButton, labelSelect, ...toggles, submit, retry, finish);

  async function openCase(caseId: string, phase: Phase) {
    view = new ViewState(caseId, phase);
    view.activeLabel = Number(labelSelect.value);
    session = await client.createSession(caseId, phase);
    await loadSlice(0);
  }

  async function loadSlice(z: number) {
    payload = await client.getSlice(view.caseId, view.phase, z);
    view.sliceIndex = z;
    view.loadSlice(payload);
    gray = await decodePng(payload.image_png, payload.shape[1], payload.shape[0]);
    umap = await decodePng(payload.umap_png, payload.shape[1], payload.shape[0]);
    draw();
  }

  async function refreshSlice() {
    if (payload) await loadSlice(payload.slice);
  }

  function draw() {
    if (!gray) return;
    replay(canvas.getContext("2d")!, renderSlice(view, gray, umap), banner);
    canvas.style.cursor = brushEnabled(view) ? "crosshair" : "not-allowed";
  }

  let painting = false;
  canvas.addEventListener("pointerdown", (e) => {
    painting = true;
    paintAt(e);
  });
  canvas.addEventListener("pointermove", (e) => painting && paintAt(e));
  window.addEventListener("pointerup", () => (painting = false));

  function paintAt(e: PointerEvent) {
    if (!brushEnabled(view)) return;
    const rect = canvas.getBoundingClientRect();
    const col = ((e.clientX - rect.left) / rect.width) * canvas.width / SCALE;
    const row = ((e.clientY - rect.top) / rect.height) * canvas.height / SCALE;
    view.paint(Math.round(row), Math.round(col));
    draw();
  }

  window.addEventListener("keydown", async (e) => {
    if (!payload) return;
    if (e.key === "ArrowRight" && payload.slice + 1 < payload.slice_count) {
      await loadSlice(payload.slice + 1);
    } else if (e.key === "ArrowLeft" && payload.slice > 0) {
      await loadSlice(payload.slice - 1);
    } else if (e.key === "p") {
      phaseButton.click();
    } else if (e.key === "z") {
      view.undo();
      draw();
    } else if (e.key === "[") {
      view.brushSize = Math.max(1, view.brushSize - 1);
    } else if (e.key === "]") {
      view.brushSize = Math.min(16, view.brushSize + 1);
    } else if ("1234".includes(e.key)) {
      view.activeLabel = Number(e.key) - 1;
      labelSelect.value = String(view.activeLabel);
    }
  });

  await openCase(cases[0].patient_id, "ED");
}

function button(label: string, onClick: (this: HTMLButtonElement) => void): HTMLButtonElement {
  const b = document.createElement("button");
  b.textContent = label;
  b.addEventListener("click", onClick);
  return b;
}

// Application wiring: upload -> invert -> ladder; sliders -> debounced edits;
// history strip restores cached results.

import { ApiClient, ApiError, DirectionInfo } from "./api.js";
import { EditSequencer } from "./sequencer.js";
import { UiSession } from "./state.js";
import {
  hideBanner,
  renderHistory,
  renderLadder,
  renderResult,
  renderSliders,
  showBanner,
} from "./ui.js";

const api = new ApiClient();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

let session: UiSession | null = null;
let sequencer: EditSequencer | null = null;
let directions: DirectionInfo[] = [];

function refreshHistory(): void {
  if (!session) return;
  renderHistory(el("history"), session.history, (index) => {
    const entry = session!.restore(index);
    if (entry) {
      renderResult(el<HTMLImageElement>("result"), entry.image);
      const slider = document.querySelector<HTMLInputElement>(
        `input[data-direction="${entry.direction}"]`,
      );
      if (slider) slider.value = String(entry.alpha);
    }
  });
}

function buildSequencer(current: UiSession): EditSequencer {
  return new EditSequencer({
    send: async (payload) => {
      const resp = await api.edit({ session_id: current.sessionId, ...payload });
      return resp.image;
    },
    apply: (image, payload) => {
      current.applyEdit(image, payload.direction, payload.alpha, payload.mode);
      renderResult(el<HTMLImageElement>("result"), image);
      refreshHistory();
      hideBanner(el("banner"));
    },
    localImage: (payload) => (payload.alpha === 0 ? current.reconstruction(payload.mode) : null),
    onError: (err, payload) => {
      if (err instanceof ApiError && err.status === 404) {
        current.markStale();
        showBanner(el("banner"), "Session expired on the server; re-invert the image to continue.");
      } else {
        showBanner(el("banner"), `Edit failed (${err}); showing the previous image.`);
      }
    },
  });
}

async function onFileChosen(file: File): Promise<void> {
  const reader = new FileReader();
  reader.onload = async () => {
    const dataUrl = reader.result as string;
    const b64 = dataUrl.slice(dataUrl.indexOf(",") + 1);
    try {
      const response = await api.invert(b64);
      session = new UiSession(response);
      sequencer = buildSequencer(session);
      hideBanner(el("banner"));
      renderLadder(el("ladder"), response);
      renderResult(el<HTMLImageElement>("result"), session.reconstruction());
      el<HTMLImageElement>("source").src = dataUrl;
      refreshHistory();
    } catch (err) {
      showBanner(el("banner"), `Inversion failed: ${err}`);
    }
  };
  reader.readAsDataURL(file);
}

function onSlider(direction: string, alpha: number): void {
  if (!session || !sequencer) return;
  if (session.stale) {
    showBanner(el("banner"), "Session expired; re-invert the image first.");
    return;
  }
  const clamped = session.setSlider(direction, alpha);
  sequencer.request({ direction, alpha: clamped, mode: session.mode });
}

async function boot(): Promise<void> {
  try {
    directions = await api.directions();
    renderSliders(el("sliders"), directions, onSlider);
  } catch (err) {
    showBanner(el("banner"), `Could not load directions: ${err}`);
  }
  el<HTMLInputElement>("file-input").addEventListener("change", (event) => {
    const input = event.target as HTMLInputElement;
    if (input.files && input.files[0]) void onFileChosen(input.files[0]);
  });
  el<HTMLSelectElement>("mode-select").addEventListener("change", (event) => {
    if (!session) return;
    session.mode = (event.target as HTMLSelectElement).value as UiSession["mode"];
    renderResult(el<HTMLImageElement>("result"), session.reconstruction());
  });
}

void boot();

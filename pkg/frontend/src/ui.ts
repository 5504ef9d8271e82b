// DOM rendering. Everything drawn here comes straight from API payloads.

import type { DirectionInfo, InvertResponse } from "./api.js";
import type { HistoryEntry } from "./state.js";

export function pngSrc(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

const LADDER: Array<{ key: "w" | "wplus" | "f"; label: string; metric: keyof NonNullable<InvertResponse["metrics"]> }> = [
  { key: "w", label: "foundation latent", metric: "psnr_w" },
  { key: "wplus", label: "per-layer latents", metric: "psnr_wplus" },
  { key: "f", label: "latents + feature", metric: "psnr_f" },
];

export function renderLadder(container: HTMLElement, response: InvertResponse): void {
  container.textContent = "";
  for (const rung of LADDER) {
    const cell = document.createElement("figure");
    cell.className = "ladder-cell";
    const img = document.createElement("img");
    img.src = pngSrc(response.images[rung.key]);
    img.alt = rung.label;
    img.dataset.level = rung.key;
    cell.appendChild(img);
    const caption = document.createElement("figcaption");
    caption.textContent = rung.label;
    if (response.metrics) {
      const badge = document.createElement("span");
      badge.className = "psnr-badge";
      badge.textContent = `${response.metrics[rung.metric].toFixed(2)} dB`;
      caption.appendChild(badge);
    }
    cell.appendChild(caption);
    container.appendChild(cell);
  }
}

export function renderResult(img: HTMLImageElement, imageB64: string): void {
  img.src = pngSrc(imageB64);
}

export function showBanner(banner: HTMLElement, message: string): void {
  banner.textContent = message;
  banner.classList.remove("hidden");
}

export function hideBanner(banner: HTMLElement): void {
  banner.textContent = "";
  banner.classList.add("hidden");
}

export function renderSliders(
  container: HTMLElement,
  directions: DirectionInfo[],
  onInput: (direction: string, alpha: number) => void,
): void {
  container.textContent = "";
  for (const dir of directions) {
    const row = document.createElement("label");
    row.className = "slider-row";
    const name = document.createElement("span");
    name.textContent = `${dir.name} (${dir.method})`;
    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = "-3";
    slider.max = "3";
    slider.step = "0.1";
    slider.value = "0";
    slider.dataset.direction = dir.name;
    const value = document.createElement("output");
    value.textContent = "0.0";
    slider.addEventListener("input", () => {
      const alpha = parseFloat(slider.value);
      value.textContent = alpha.toFixed(1);
      onInput(dir.name, alpha);
    });
    row.append(name, slider, value);
    container.appendChild(row);
  }
}

export function renderHistory(
  container: HTMLElement,
  entries: HistoryEntry[],
  onClick: (index: number) => void,
): void {
  container.textContent = "";
  entries.forEach((entry, index) => {
    const thumb = document.createElement("img");
    thumb.className = "history-thumb";
    thumb.src = pngSrc(entry.image);
    thumb.title = `${entry.direction} ${entry.alpha >= 0 ? "+" : ""}${entry.alpha.toFixed(1)} (${entry.mode})`;
    thumb.addEventListener("click", () => onClick(index));
    container.appendChild(thumb);
  });
}

// Client-side session state: the inversion ladder, per-direction slider
// values, the mode toggle and the append-only edit history. All images are
// base64 PNG payloads straight from the API; no model math happens here.

import type { InvertResponse } from "./api.js";

export const SLIDER_LIMIT = 3;

export interface HistoryEntry {
  direction: string;
  alpha: number;
  mode: string;
  image: string;
}

export class UiSession {
  sessionId: string;
  images: { w: string; wplus: string; f: string };
  metrics: InvertResponse["metrics"];
  mode: "latent_only" | "latent_and_feature" = "latent_and_feature";
  sliders = new Map<string, number>();
  history: HistoryEntry[] = [];
  currentImage: string;
  stale = false;

  constructor(response: InvertResponse) {
    this.sessionId = response.session_id;
    this.images = response.images;
    this.metrics = response.metrics;
    this.currentImage = this.reconstruction();
  }

  reconstruction(mode?: string): string {
    const m = mode ?? this.mode;
    return m === "latent_only" ? this.images.wplus : this.images.f;
  }

  setSlider(direction: string, alpha: number): number {
    const clamped = Math.max(-SLIDER_LIMIT, Math.min(SLIDER_LIMIT, alpha));
    this.sliders.set(direction, clamped);
    return clamped;
  }

  applyEdit(image: string, direction: string, alpha: number, mode: string): void {
    this.currentImage = image;
    this.history.push({ direction, alpha, mode, image });
  }

  restore(index: number): HistoryEntry | null {
    const entry = this.history[index];
    if (!entry) return null;
    this.sliders.set(entry.direction, entry.alpha);
    this.mode = entry.mode as UiSession["mode"];
    this.currentImage = entry.image;
    return entry;
  }

  markStale(): void {
    this.stale = true;
  }
}

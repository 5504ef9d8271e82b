import { beforeEach, describe, expect, it, vi } from "vitest";

import type { InvertResponse } from "../src/api.js";
import { hideBanner, renderHistory, renderLadder, renderSliders, showBanner } from "../src/ui.js";

const FIXTURE: InvertResponse = {
  session_id: "abc123",
  metrics: { psnr_w: 11.21, psnr_wplus: 14.56, psnr_f: 15.33 },
  images: { w: "W_B64", wplus: "WPLUS_B64", f: "F_B64" },
};

describe("renderLadder", () => {
  let container: HTMLElement;
  beforeEach(() => {
    container = document.createElement("div");
  });

  it("renders the three labeled reconstructions with PSNR badges", () => {
    renderLadder(container, FIXTURE);
    const imgs = container.querySelectorAll("img");
    expect(imgs.length).toBe(3);
    expect(imgs[0].src).toContain("W_B64");
    expect(imgs[1].src).toContain("WPLUS_B64");
    expect(imgs[2].src).toContain("F_B64");
    const badges = container.querySelectorAll(".psnr-badge");
    expect(badges.length).toBe(3);
    expect(badges[0].textContent).toBe("11.21 dB");
  });

  it("hides badges when metrics are missing but still shows images", () => {
    const { metrics, ...rest } = FIXTURE;
    renderLadder(container, rest as InvertResponse);
    expect(container.querySelectorAll("img").length).toBe(3);
    expect(container.querySelectorAll(".psnr-badge").length).toBe(0);
  });

  it("re-rendering replaces the previous ladder", () => {
    renderLadder(container, FIXTURE);
    renderLadder(container, FIXTURE);
    expect(container.querySelectorAll("img").length).toBe(3);
  });
});

describe("renderHistory", () => {
  it("renders nothing for an empty history", () => {
    const container = document.createElement("div");
    renderHistory(container, [], () => {});
    expect(container.children.length).toBe(0);
  });

  it("renders thumbnails in order and forwards clicks without network use", () => {
    const container = document.createElement("div");
    const clicks: number[] = [];
    const entries = [
      { direction: "age", alpha: 1, mode: "latent_only", image: "A" },
      { direction: "age", alpha: 2, mode: "latent_only", image: "B" },
      { direction: "smile", alpha: -1, mode: "latent_and_feature", image: "C" },
    ];
    const fetchSpy = vi.fn();
    globalThis.fetch = fetchSpy as unknown as typeof fetch;
    renderHistory(container, entries, (i) => clicks.push(i));
    const thumbs = container.querySelectorAll("img");
    expect(thumbs.length).toBe(3);
    expect(thumbs[2].src).toContain("C");
    (thumbs[1] as HTMLElement).click();
    expect(clicks).toEqual([1]);
    expect(fetchSpy).not.toHaveBeenCalled();
  });
});

describe("renderSliders", () => {
  it("creates a +-3 range per direction and reports input values", () => {
    const container = document.createElement("div");
    const seen: Array<[string, number]> = [];
    renderSliders(
      container,
      [
        { name: "age", method: "svm", sigma: 1.0 },
        { name: "pca0", method: "pca", sigma: 2.0 },
      ],
      (d, a) => seen.push([d, a]),
    );
    const sliders = container.querySelectorAll("input[type=range]");
    expect(sliders.length).toBe(2);
    const first = sliders[0] as HTMLInputElement;
    expect(first.min).toBe("-3");
    expect(first.max).toBe("3");
    first.value = "1.5";
    first.dispatchEvent(new Event("input"));
    expect(seen).toEqual([["age", 1.5]]);
  });
});

describe("banner", () => {
  it("shows and hides", () => {
    const banner = document.createElement("div");
    banner.classList.add("hidden");
    showBanner(banner, "boom");
    expect(banner.classList.contains("hidden")).toBe(false);
    expect(banner.textContent).toBe("boom");
    hideBanner(banner);
    expect(banner.classList.contains("hidden")).toBe(true);
  });
});

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { EditSequencer, EditPayload } from "../src/sequencer.js";

interface Deferred {
  payload: EditPayload;
  resolve: (image: string) => void;
  reject: (err: unknown) => void;
}

function harness(opts: { recon?: string } = {}) {
  const sent: Deferred[] = [];
  const applied: Array<{ image: string; payload: EditPayload }> = [];
  const errors: unknown[] = [];
  let inFlight = 0;
  let maxInFlight = 0;
  const sequencer = new EditSequencer({
    send: (payload) =>
      new Promise<string>((resolve, reject) => {
        inFlight += 1;
        maxInFlight = Math.max(maxInFlight, inFlight);
        sent.push({
          payload,
          resolve: (image) => {
            inFlight -= 1;
            resolve(image);
          },
          reject: (err) => {
            inFlight -= 1;
            reject(err);
          },
        });
      }),
    apply: (image, payload) => applied.push({ image, payload }),
    localImage: (payload) => (payload.alpha === 0 ? opts.recon ?? "RECON" : null),
    onError: (err) => errors.push(err),
  });
  return {
    sequencer,
    sent,
    applied,
    errors,
    maxInFlight: () => maxInFlight,
  };
}

const edit = (alpha: number): EditPayload => ({ direction: "dir", alpha, mode: "latent_and_feature" });

describe("EditSequencer", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("resolves alpha=0 locally with zero requests", async () => {
    const h = harness();
    h.sequencer.request(edit(0));
    await vi.runAllTimersAsync();
    expect(h.sent.length).toBe(0);
    expect(h.applied).toEqual([{ image: "RECON", payload: edit(0) }]);
  });

  it("debounces rapid drags into one request", async () => {
    const h = harness();
    h.sequencer.request(edit(0.5));
    await vi.advanceTimersByTimeAsync(50);
    h.sequencer.request(edit(1.0));
    await vi.advanceTimersByTimeAsync(50);
    h.sequencer.request(edit(1.5));
    await vi.advanceTimersByTimeAsync(200);
    expect(h.sent.length).toBe(1);
    expect(h.sent[0].payload.alpha).toBe(1.5);
  });

  it("waits at least the debounce interval before sending", async () => {
    const h = harness();
    h.sequencer.request(edit(2));
    await vi.advanceTimersByTimeAsync(149);
    expect(h.sent.length).toBe(0);
    await vi.advanceTimersByTimeAsync(1);
    expect(h.sent.length).toBe(1);
  });

  it("keeps at most one request in flight and sends the latest afterwards", async () => {
    const h = harness();
    h.sequencer.request(edit(1));
    await vi.advanceTimersByTimeAsync(150);
    expect(h.sent.length).toBe(1);
    // two more drags while the first request is unresolved
    h.sequencer.request(edit(1.5));
    await vi.advanceTimersByTimeAsync(150);
    h.sequencer.request(edit(2.0));
    await vi.advanceTimersByTimeAsync(150);
    expect(h.sent.length).toBe(1); // still only one in flight
    h.sent[0].resolve("IMG1");
    await vi.runAllTimersAsync();
    expect(h.sent.length).toBe(2);
    expect(h.sent[1].payload.alpha).toBe(2.0);
    h.sent[1].resolve("IMG2");
    await vi.runAllTimersAsync();
    expect(h.maxInFlight()).toBe(1);
    expect(h.applied.map((a) => a.image)).toEqual(["IMG1", "IMG2"]);
  });

  it("discards a stale response that lands after a newer local result", async () => {
    const h = harness();
    h.sequencer.request(edit(2));
    await vi.advanceTimersByTimeAsync(150);
    expect(h.sent.length).toBe(1);
    // drag back to zero: applied instantly from cache
    h.sequencer.request(edit(0));
    expect(h.applied.map((a) => a.image)).toEqual(["RECON"]);
    // the older response arrives late and must be dropped
    h.sent[0].resolve("STALE");
    await vi.runAllTimersAsync();
    expect(h.applied.map((a) => a.image)).toEqual(["RECON"]);
  });

  it("drag out and back to zero ends on the reconstruction", async () => {
    const h = harness();
    h.sequencer.request(edit(2));
    await vi.advanceTimersByTimeAsync(150);
    h.sent[0].resolve("EDITED");
    await vi.runAllTimersAsync();
    h.sequencer.request(edit(0));
    await vi.runAllTimersAsync();
    expect(h.applied.at(-1)?.image).toBe("RECON");
    expect(h.sent.length).toBe(1);
  });

  it("routes failures to onError and keeps the previous image", async () => {
    const h = harness();
    h.sequencer.request(edit(1));
    await vi.advanceTimersByTimeAsync(150);
    h.sent[0].reject(new Error("network down"));
    await vi.runAllTimersAsync();
    expect(h.errors.length).toBe(1);
    expect(h.applied.length).toBe(0);
  });
});

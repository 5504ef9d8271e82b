// Edit request scheduling: debounced sends, a single request in flight, and
// monotonically increasing tokens so a superseded response can never
// overwrite a newer one. Alpha = 0 resolves locally from the cached
// reconstruction and issues no request at all.

export interface EditPayload {
  direction: string;
  alpha: number;
  mode: string;
}

export interface SequencerHooks {
  send: (payload: EditPayload) => Promise<string>;
  apply: (image: string, payload: EditPayload) => void;
  localImage?: (payload: EditPayload) => string | null;
  onError?: (err: unknown, payload: EditPayload) => void;
}

export class EditSequencer {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private pending: EditPayload | null = null;
  private lastToken = 0;
  private lastApplied = 0;

  constructor(
    private hooks: SequencerHooks,
    readonly debounceMs: number = 150,
  ) {}

  get hasInFlight(): boolean {
    return this.inFlight;
  }

  request(payload: EditPayload): void {
    const local = this.hooks.localImage?.(payload) ?? null;
    if (local !== null) {
      // local result wins immediately and supersedes anything in flight
      this.cancelTimer();
      this.pending = null;
      const token = ++this.lastToken;
      this.lastApplied = token;
      this.hooks.apply(local, payload);
      return;
    }
    this.cancelTimer();
    this.timer = setTimeout(() => {
      this.timer = null;
      this.fire(payload);
    }, this.debounceMs);
  }

  private cancelTimer(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  private fire(payload: EditPayload): void {
    if (this.inFlight) {
      this.pending = payload;
      return;
    }
    const token = ++this.lastToken;
    this.inFlight = true;
    this.hooks.send(payload).then(
      (image) => this.settle(token, payload, image, null),
      (err) => this.settle(token, payload, null, err),
    );
  }

  private settle(
    token: number,
    payload: EditPayload,
    image: string | null,
    err: unknown,
  ): void {
    this.inFlight = false;
    if (image !== null) {
      if (token > this.lastApplied) {
        this.lastApplied = token;
        this.hooks.apply(image, payload);
      }
    } else if (err !== null) {
      this.hooks.onError?.(err, payload);
    }
    if (this.pending !== null) {
      const next = this.pending;
      this.pending = null;
      this.fire(next);
    }
  }
}

// Typed client for the editing service JSON API. The fetch implementation is
// injectable so tests can run against a mock server.

export interface ReconstructionMetrics {
  psnr_w: number;
  psnr_wplus: number;
  psnr_f: number;
}

export interface InvertResponse {
  session_id: string;
  metrics?: ReconstructionMetrics;
  images: { w: string; wplus: string; f: string };
}

export interface DirectionInfo {
  name: string;
  method: string;
  sigma: number;
}

export interface EditRequest {
  session_id: string;
  direction: string;
  alpha: number;
  mode: string;
}

export interface EditResponse {
  image: string;
  applied: { direction: string; alpha: number; mode: string };
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async json<T>(url: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.baseUrl + url, init);
    } catch (err) {
      throw new ApiError(0, `network error: ${err}`);
    }
    if (!resp.ok) {
      throw new ApiError(resp.status, `${url} failed with ${resp.status}`);
    }
    return (await resp.json()) as T;
  }

  health(): Promise<{ status: string; checkpoint_version: string }> {
    return this.json("/api/health");
  }

  directions(): Promise<DirectionInfo[]> {
    return this.json("/api/directions");
  }

  invert(imageB64: string): Promise<InvertResponse> {
    return this.json("/api/invert", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image: imageB64 }),
    });
  }

  edit(req: EditRequest): Promise<EditResponse> {
    return this.json("/api/edit", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
  }
}

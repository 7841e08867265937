import type { ClassConfig, LabelPost, NextResponse, ProgressInfo } from "./types";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  status: number;
  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/**
 * Retry NETWORK failures with exponential backoff; HTTP error statuses are
 * the server speaking and are surfaced immediately as ApiError.
 */
export async function fetchJson<T>(
  fetcher: FetchLike,
  url: string,
  init?: RequestInit,
  retries = 3,
  baseDelayMs = 250,
): Promise<T> {
  let attempt = 0;
  for (;;) {
    let response: Response;
    try {
      response = await fetcher(url, init);
    } catch (err) {
      if (attempt >= retries) throw err;
      await sleep(baseDelayMs * Math.pow(2, attempt));
      attempt += 1;
      continue;
    }
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const body = await response.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }
}

export class ApiClient {
  private fetcher: FetchLike;
  base: string;

  constructor(fetcher?: FetchLike, base = "") {
    this.fetcher = fetcher ?? ((input, init) => fetch(input, init));
    this.base = base;
  }

  nextChip(labeler: string): Promise<NextResponse> {
    return fetchJson(this.fetcher, `${this.base}/api/next?labeler=${encodeURIComponent(labeler)}`);
  }

  submitLabel(post: LabelPost): Promise<{ ok: boolean }> {
    return fetchJson(this.fetcher, `${this.base}/api/label`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(post),
    });
  }

  classes(): Promise<ClassConfig> {
    return fetchJson(this.fetcher, `${this.base}/api/classes`);
  }

  progress(): Promise<ProgressInfo> {
    return fetchJson(this.fetcher, `${this.base}/api/progress`);
  }

  chipImageUrl(imageUrl: string): string {
    return `${this.base}${imageUrl}`;
  }
}

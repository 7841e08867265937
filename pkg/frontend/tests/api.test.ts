import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError, fetchJson } from "../src/api";

const jsonResponse = (body: unknown, status = 200) =>
  new Response(JSON.stringify(body), { status, headers: { "content-type": "application/json" } });

describe("fetchJson", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("retries network failures with backoff", async () => {
    let calls = 0;
    const flaky = async () => {
      calls += 1;
      if (calls < 3) throw new TypeError("network down");
      return jsonResponse({ ok: true });
    };
    const promise = fetchJson<{ ok: boolean }>(flaky, "/x");
    await vi.advanceTimersByTimeAsync(250 + 500);
    await expect(promise).resolves.toEqual({ ok: true });
    expect(calls).toBe(3);
  });

  it("gives up after the retry budget", async () => {
    let calls = 0;
    const dead = async () => {
      calls += 1;
      throw new TypeError("still down");
    };
    const promise = fetchJson(dead, "/x", undefined, 2, 10);
    promise.catch(() => undefined); // avoid unhandled rejection while timers run
    await vi.advanceTimersByTimeAsync(10 + 20);
    await expect(promise).rejects.toThrow("still down");
    expect(calls).toBe(3);
  });

  it("does not retry HTTP errors and surfaces the server detail", async () => {
    let calls = 0;
    const refusing = async () => {
      calls += 1;
      return jsonResponse({ detail: "chip 'x' is already retired" }, 409);
    };
    const promise = fetchJson(refusing, "/x");
    await expect(promise).rejects.toMatchObject({ status: 409, message: "chip 'x' is already retired" });
    expect(calls).toBe(1);
  });
});

describe("ApiClient", () => {
  it("builds the expected requests", async () => {
    const seen: Array<{ url: string; init?: RequestInit }> = [];
    const fake = async (url: string, init?: RequestInit) => {
      seen.push({ url, init });
      return jsonResponse({ done: true });
    };
    const api = new ApiClient(fake);
    await api.nextChip("alice b");
    await api.submitLabel({ chip_id: "c", labeler: "alice b", class: "ship" });
    expect(seen[0].url).toBe("/api/next?labeler=alice%20b");
    expect(seen[1].url).toBe("/api/label");
    expect(seen[1].init?.method).toBe("POST");
    expect(JSON.parse(String(seen[1].init?.body))).toEqual({ chip_id: "c", labeler: "alice b", class: "ship" });
    expect(api.chipImageUrl("/api/chip/c.png")).toBe("/api/chip/c.png");
  });

  it("ApiError carries the status", () => {
    const err = new ApiError(400, "bad");
    expect(err.status).toBe(400);
    expect(err.message).toBe("bad");
  });
});

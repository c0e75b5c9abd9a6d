import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { debounce, LatestWins } from "../src/debounce";

describe("debounce", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("fires exactly once after a burst of slider changes", () => {
    const calls: number[] = [];
    const regen = debounce((v: number) => calls.push(v), 300);
    for (let i = 0; i < 15; i++) {
      regen.call(i);
      vi.advanceTimersByTime(50); // still inside the window each time
    }
    expect(calls).toHaveLength(0);
    vi.advanceTimersByTime(300);
    expect(calls).toEqual([14]); // one regenerate, with the latest value
    vi.advanceTimersByTime(1000);
    expect(calls).toHaveLength(1);
  });

  it("separated bursts each trigger one call", () => {
    const fn = vi.fn();
    const regen = debounce(fn, 300);
    regen.call();
    vi.advanceTimersByTime(301);
    regen.call();
    vi.advanceTimersByTime(301);
    expect(fn).toHaveBeenCalledTimes(2);
  });

  it("cancel drops the pending call", () => {
    const fn = vi.fn();
    const regen = debounce(fn, 300);
    regen.call();
    expect(regen.pending()).toBe(true);
    regen.cancel();
    vi.advanceTimersByTime(1000);
    expect(fn).not.toHaveBeenCalled();
    expect(regen.pending()).toBe(false);
  });
});

describe("latest-wins requests", () => {
  it("drops resolutions from stale requests", async () => {
    const tracker = new LatestWins<string>();
    const seen: string[] = [];
    let releaseFirst: (v: string) => void = () => {};
    const first = new Promise<string>((res) => (releaseFirst = res));
    const p1 = tracker.run(() => first, (v) => seen.push(v));
    const p2 = tracker.run(async () => "second", (v) => seen.push(v));
    await p2;
    releaseFirst("first");
    await p1;
    expect(seen).toEqual(["second"]);
  });

  it("propagates errors only for the newest request", async () => {
    const tracker = new LatestWins<string>();
    const errors: unknown[] = [];
    await tracker.run(
      async () => {
        throw new Error("boom");
      },
      () => {},
      (err) => errors.push(err),
    );
    expect(errors).toHaveLength(1);
  });
});

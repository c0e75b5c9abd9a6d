// Trailing debounce plus latest-wins request tracking: drags fire many
// mutations, we regenerate once things settle, and a stale in-flight render
// never overwrites a newer one.

export type Cancel = () => void;

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): { call: (...args: A) => void; cancel: Cancel; pending: () => boolean } {
  let timer: ReturnType<typeof setTimeout> | null = null;
  return {
    call(...args: A) {
      if (timer !== null) clearTimeout(timer);
      timer = setTimeout(() => {
        timer = null;
        fn(...args);
      }, waitMs);
    },
    cancel() {
      if (timer !== null) clearTimeout(timer);
      timer = null;
    },
    pending: () => timer !== null,
  };
}

export class LatestWins<T> {
  private ticket = 0;

  // runs the async task; the resolve callback fires only if no newer task
  // was started in the meantime
  async run(task: () => Promise<T>, resolve: (value: T) => void,
            reject?: (err: unknown) => void): Promise<void> {
    const mine = ++this.ticket;
    try {
      const value = await task();
      if (mine === this.ticket) resolve(value);
    } catch (err) {
      if (mine === this.ticket && reject) reject(err);
    }
  }
}

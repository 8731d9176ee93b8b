/**
 * Serialized event delivery: items are handled strictly in arrival order,
 * one at a time, even when the handler itself pushes more items. All UI
 * state updates flow through one such queue per page.
 */

export class SerialEventQueue<T> {
  private readonly items: T[] = [];
  private draining = false;

  constructor(private readonly handler: (item: T) => void) {}

  push(item: T): void {
    this.items.push(item);
    if (this.draining) {
      return;
    }
    this.draining = true;
    try {
      for (;;) {
        const next = this.items.shift();
        if (next === undefined) {
          break;
        }
        this.handler(next);
      }
    } finally {
      this.draining = false;
    }
  }
}

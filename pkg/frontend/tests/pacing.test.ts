import { describe, expect, it } from "vitest";

import {
  RELEASE_INTERVAL_MS,
  WORDS_PER_SECOND,
  visibleCharsAt,
  wordPrefixLengths,
} from "../src/pacing.js";
import { SerialEventQueue } from "../src/queue.js";

describe("pacing", () => {
  it("releases words at 4 per second", () => {
    expect(WORDS_PER_SECOND).toBe(4);
    expect(RELEASE_INTERVAL_MS).toBe(250);
  });

  it("finds cumulative word-end offsets", () => {
    expect(wordPrefixLengths("Vincent van Gogh")).toEqual([7, 11, 16]);
    expect(wordPrefixLengths("  leading space")).toEqual([9, 15]);
    expect(wordPrefixLengths("")).toEqual([]);
    expect(wordPrefixLengths("   ")).toEqual([]);
  });

  it("shows the first word immediately and one more per interval", () => {
    const text = "Vincent van Gogh was";
    expect(visibleCharsAt(text, 0)).toBe(7); // "Vincent"
    expect(visibleCharsAt(text, 249)).toBe(7);
    expect(visibleCharsAt(text, 250)).toBe(11); // "Vincent van"
    expect(visibleCharsAt(text, 500)).toBe(16);
    expect(visibleCharsAt(text, 750)).toBe(20);
    expect(visibleCharsAt(text, 60_000)).toBe(20); // clamped to what exists
  });

  it("never exposes a dangling separator after the last word", () => {
    expect(visibleCharsAt("ab ", 60_000)).toBe(2);
  });

  it("shows nothing before start or on empty text", () => {
    expect(visibleCharsAt("words here", -1)).toBe(0);
    expect(visibleCharsAt("", 1000)).toBe(0);
  });
});

describe("SerialEventQueue", () => {
  it("handles items strictly in arrival order", () => {
    const seen: number[] = [];
    const queue = new SerialEventQueue<number>((n) => seen.push(n));
    queue.push(1);
    queue.push(2);
    queue.push(3);
    expect(seen).toEqual([1, 2, 3]);
  });

  it("keeps order when the handler pushes re-entrantly", () => {
    const seen: string[] = [];
    const queue = new SerialEventQueue<string>((item) => {
      seen.push(item);
      if (item === "a") {
        queue.push("a-follow-up");
      }
    });
    queue.push("a");
    queue.push("b");
    expect(seen).toEqual(["a", "a-follow-up", "b"]);
  });
});

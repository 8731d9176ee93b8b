/**
 * Paced rendering: release the answer word by word at comfortable reading
 * speed instead of as fast as the stream arrives. Off by default; when on,
 * words appear at 4 words per second (one word every 250 ms), the first
 * immediately.
 */

export const WORDS_PER_SECOND = 4;
export const RELEASE_INTERVAL_MS = 1000 / WORDS_PER_SECOND;

/**
 * Cumulative character counts at which each whitespace word of `text` is
 * complete. A word ends at the last character before whitespace or at the
 * end of the text.
 */
export function wordPrefixLengths(text: string): number[] {
  const lengths: number[] = [];
  let inWord = false;
  for (let i = 0; i < text.length; i++) {
    const isSpace = /\s/.test(text[i]);
    if (inWord && isSpace) {
      lengths.push(i);
      inWord = false;
    } else if (!isSpace) {
      inWord = true;
    }
  }
  if (inWord) {
    lengths.push(text.length);
  }
  return lengths;
}

/**
 * How many characters of `text` are visible `elapsedMs` after pacing
 * started. floor(elapsed / 250) + 1 words are released (clamped); trailing
 * whitespace after the last released word stays hidden until the next word
 * arrives, so a growing stream never flashes a dangling separator.
 */
export function visibleCharsAt(text: string, elapsedMs: number): number {
  if (elapsedMs < 0) {
    return 0;
  }
  const ends = wordPrefixLengths(text);
  if (ends.length === 0) {
    return 0;
  }
  const released = Math.min(ends.length, Math.floor(elapsedMs / RELEASE_INTERVAL_MS) + 1);
  return ends[released - 1];
}

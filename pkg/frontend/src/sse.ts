/**
 * Incremental Server-Sent Events frame parser.
 *
 * Network chunks can split a frame anywhere — mid-line, mid-JSON, even
 * between the CR and LF of a CRLF pair — so the parser buffers input and
 * emits a frame only once its terminating blank line has fully arrived.
 */

export interface SseFrame {
  /** Value of the `event:` field; "message" when the field is absent. */
  event: string;
  /** All `data:` lines of the frame, joined with newlines. */
  data: string;
}

export class SseFrameParser {
  private buffer = "";

  /**
   * Feed one chunk of stream text; returns every frame completed by it.
   */
  push(chunk: string): SseFrame[] {
    this.buffer += chunk;
    // Hold back a trailing CR: it may be the first half of a CRLF whose LF
    // is still in flight. Everything before it can be normalized safely.
    let text = this.buffer;
    let held = "";
    if (text.endsWith("\r")) {
      held = "\r";
      text = text.slice(0, -1);
    }
    text = text.replace(/\r\n/g, "\n").replace(/\r/g, "\n");

    const frames: SseFrame[] = [];
    let start = 0;
    for (;;) {
      const end = text.indexOf("\n\n", start);
      if (end === -1) {
        break;
      }
      const frame = parseBlock(text.slice(start, end));
      if (frame !== null) {
        frames.push(frame);
      }
      start = end + 2;
    }
    this.buffer = text.slice(start) + held;
    return frames;
  }

  /** Text buffered but not yet terminated by a blank line. */
  pending(): string {
    return this.buffer;
  }
}

function parseBlock(block: string): SseFrame | null {
  let event = "message";
  const dataLines: string[] = [];
  for (const line of block.split("\n")) {
    if (line.startsWith(":")) {
      continue; // comment / keep-alive
    }
    const colon = line.indexOf(":");
    if (colon === -1) {
      continue;
    }
    const field = line.slice(0, colon);
    let value = line.slice(colon + 1);
    if (value.startsWith(" ")) {
      value = value.slice(1);
    }
    if (field === "event") {
      event = value;
    } else if (field === "data") {
      dataLines.push(value);
    }
    // id: and retry: are irrelevant to this protocol and ignored.
  }
  if (dataLines.length === 0) {
    return null;
  }
  return { event, data: dataLines.join("\n") };
}

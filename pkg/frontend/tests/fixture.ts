/**
 * Recorded SSE streams in the exact wire format the service emits:
 * `event: <type>` line, `data: <JSON with sorted keys>` line, blank line.
 */

function frame(event: string, data: string): string {
  return `event: ${event}\ndata: ${data}\n\n`;
}

export const VAN_GOGH_QUERY = "Tell me about Vincent van Gogh";

/** Clean session: five opener tokens, handoff, three continuation tokens, done. */
export const VAN_GOGH_STREAM =
  frame("opener_token", '{"session_id": "s1", "t_ms": 12.5, "text_delta": "Vincent", "token_id": 301}') +
  frame("opener_token", '{"session_id": "s1", "t_ms": 19.0, "text_delta": " van Gogh", "token_id": 302}') +
  frame("opener_token", '{"session_id": "s1", "t_ms": 26.25, "text_delta": " was", "token_id": 303}') +
  frame("opener_token", '{"session_id": "s1", "t_ms": 33.0, "text_delta": " a significant", "token_id": 304}') +
  frame("opener_token", '{"session_id": "s1", "t_ms": 41.75, "text_delta": " figure in", "token_id": 305}') +
  frame(
    "handoff",
    '{"opener_text": "Vincent van Gogh was a significant figure in", "session_id": "s1", ' +
      '"stop_reason": "word_budget", "t_ms": 42.5, "ttft_ms": 12.5, "word_count": 8}',
  ) +
  frame("continuation_token", '{"session_id": "s1", "t_ms": 228.0, "text_delta": "the development "}') +
  frame("continuation_token", '{"session_id": "s1", "t_ms": 241.5, "text_delta": "of modern "}') +
  frame("continuation_token", '{"session_id": "s1", "t_ms": 255.0, "text_delta": "art."}') +
  frame(
    "done",
    '{"cloud_ttfb_ms": 185.5, "corrected": false, "correction_provenance": "marker", ' +
      '"duplication_warning": false, "session_id": "s1", ' +
      '"stitched_text": "Vincent van Gogh was a significant figure in the development of modern art.", ' +
      '"t_ms": 262.0}',
  );

export const VAN_GOGH_OPENER = "Vincent van Gogh was a significant figure in";
export const VAN_GOGH_CONTINUATION = "the development of modern art.";

export const CORRECTION_QUERY = "How big is the Space Needle?";

/** Session where the continuation disavows the opener with a marker line. */
export const CORRECTION_STREAM =
  frame("opener_token", '{"session_id": "s2", "t_ms": 11.0, "text_delta": "The size of", "token_id": 41}') +
  frame("opener_token", '{"session_id": "s2", "t_ms": 18.5, "text_delta": " a space", "token_id": 42}') +
  frame(
    "handoff",
    '{"opener_text": "The size of a space", "session_id": "s2", "stop_reason": "word_budget", ' +
      '"t_ms": 19.0, "ttft_ms": 11.0, "word_count": 5}',
  ) +
  frame(
    "continuation_token",
    '{"session_id": "s2", "t_ms": 201.0, "text_delta": "\\nCorrection: the Space Needle "}',
  ) +
  frame("correction", '{"provenance": "marker", "session_id": "s2", "t_ms": 201.2}') +
  frame("continuation_token", '{"session_id": "s2", "t_ms": 216.0, "text_delta": "opened in April 1962."}') +
  frame(
    "done",
    '{"cloud_ttfb_ms": 182.0, "corrected": true, "correction_provenance": "marker", ' +
      '"duplication_warning": false, "session_id": "s2", ' +
      '"stitched_text": "The size of a space\\nCorrection: the Space Needle opened in April 1962.", ' +
      '"t_ms": 224.0}',
  );

export const ERROR_QUERY = "When did it open?";

/** Session where the cloud dies mid-stream after partial text. */
export const ERROR_STREAM =
  frame("opener_token", '{"session_id": "s3", "t_ms": 10.0, "text_delta": "It opened", "token_id": 7}') +
  frame(
    "handoff",
    '{"opener_text": "It opened", "session_id": "s3", "stop_reason": "word_budget", ' +
      '"t_ms": 11.0, "ttft_ms": 10.0, "word_count": 2}',
  ) +
  frame("continuation_token", '{"session_id": "s3", "t_ms": 180.0, "text_delta": " in April "}') +
  frame(
    "error",
    '{"kind": "CloudTransportError", "message": "continuation transport failed: connection reset", ' +
      '"session_id": "s3", "t_ms": 196.0}',
  );

/** Split text into consecutive chunks of the given size. */
export function chunked(text: string, size: number): string[] {
  const chunks: string[] = [];
  for (let i = 0; i < text.length; i += size) {
    chunks.push(text.slice(i, i + size));
  }
  return chunks;
}

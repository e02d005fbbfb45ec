/** Server-sent-events reader over fetch.
 *
 * EventSource cannot send an Authorization header, so the stream is read
 * from a fetch body instead. Drops reconnect automatically; the consumer
 * is told about each gap so charts can mark it.
 */

export interface SseEvent {
  event: string;
  data: string;
}

/** Split complete events out of an SSE text buffer; returns the leftover. */
export function parseSseChunk(buffer: string): { events: SseEvent[]; rest: string } {
  const events: SseEvent[] = [];
  const blocks = buffer.split("\n\n");
  const rest = blocks.pop() ?? "";
  for (const block of blocks) {
    let event = "message";
    const dataLines: string[] = [];
    for (const line of block.split("\n")) {
      if (line.startsWith("event:")) {
        event = line.slice("event:".length).trim();
      } else if (line.startsWith("data:")) {
        dataLines.push(line.slice("data:".length).trimStart());
      }
      // comment lines (": keepalive") are ignored
    }
    if (dataLines.length > 0) {
      events.push({ event, data: dataLines.join("\n") });
    }
  }
  return { events, rest };
}

export class SseStream {
  private stopped = false;
  private controller: AbortController | null = null;

  constructor(
    private readonly url: string,
    private readonly token: string,
    private readonly onEvent: (event: SseEvent) => void,
    private readonly onGap: () => void,
    private readonly retryMs = 2000,
  ) {}

  start(): void {
    this.stopped = false;
    void this.loop();
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }

  private async loop(): Promise<void> {
    let first = true;
    while (!this.stopped) {
      if (!first) {
        this.onGap();
        await new Promise((resolve) => setTimeout(resolve, this.retryMs));
        if (this.stopped) {
          return;
        }
      }
      first = false;
      this.controller = new AbortController();
      try {
        const response = await fetch(this.url, {
          headers: { Authorization: `Bearer ${this.token}` },
          signal: this.controller.signal,
        });
        if (!response.ok || !response.body) {
          continue;
        }
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        for (;;) {
          const { done, value } = await reader.read();
          if (done) {
            break;
          }
          buffer += decoder.decode(value, { stream: true });
          const { events, rest } = parseSseChunk(buffer);
          buffer = rest;
          for (const event of events) {
            this.onEvent(event);
          }
        }
      } catch {
        // aborted or dropped; the loop head decides whether to reconnect
      }
    }
  }
}

import { describe, expect, it } from "vitest";

import { parseSseChunk } from "../src/sse.js";

describe("SSE chunk parsing", () => {
  it("extracts complete events and keeps the remainder", () => {
    const { events, rest } = parseSseChunk(
      'event: telemetry\ndata: {"register": 40083}\n\ndata: partial',
    );
    expect(events).toEqual([{ event: "telemetry", data: '{"register": 40083}' }]);
    expect(rest).toBe("data: partial");
  });

  it("defaults the event name to message", () => {
    const { events } = parseSseChunk("data: hello\n\n");
    expect(events).toEqual([{ event: "message", data: "hello" }]);
  });

  it("ignores keepalive comments", () => {
    const { events, rest } = parseSseChunk(": keepalive\n\n");
    expect(events).toEqual([]);
    expect(rest).toBe("");
  });

  it("handles several events in one chunk", () => {
    const { events } = parseSseChunk("data: a\n\nevent: telemetry\ndata: b\n\n");
    expect(events.map((e) => e.data)).toEqual(["a", "b"]);
  });

  it("joins multi-line data blocks", () => {
    const { events } = parseSseChunk("data: line1\ndata: line2\n\n");
    expect(events[0].data).toBe("line1\nline2");
  });
});

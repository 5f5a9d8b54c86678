// Incremental text/event-stream parser. EventSource cannot POST, and the
// edit endpoint streams over a POST response, so frames are parsed by hand
// from fetch's body stream. Handles frames split anywhere across chunks
// and all three line endings.

export interface SseEvent {
  event: string;
  data: string;
}

export class SseParser {
  private buffer = "";
  private eventType = "";
  private dataLines: string[] = [];

  push(chunk: string): SseEvent[] {
    this.buffer += chunk;
    const events: SseEvent[] = [];
    let start = 0;
    for (let i = 0; i < this.buffer.length; i++) {
      const ch = this.buffer[i];
      if (ch !== "\n" && ch !== "\r") continue;
      // a trailing \r may be the first half of \r\n; wait for the next chunk
      if (ch === "\r" && i === this.buffer.length - 1) break;
      const line = this.buffer.slice(start, i);
      if (ch === "\r" && this.buffer[i + 1] === "\n") i++;
      start = i + 1;
      this.line(line, events);
    }
    this.buffer = this.buffer.slice(start);
    return events;
  }

  private line(line: string, events: SseEvent[]): void {
    if (line === "") {
      if (this.dataLines.length > 0) {
        events.push({ event: this.eventType || "message", data: this.dataLines.join("\n") });
      }
      this.eventType = "";
      this.dataLines = [];
      return;
    }
    if (line.startsWith(":")) return; // comment / keep-alive
    const sep = line.indexOf(":");
    const field = sep < 0 ? line : line.slice(0, sep);
    let value = sep < 0 ? "" : line.slice(sep + 1);
    if (value.startsWith(" ")) value = value.slice(1);
    if (field === "event") this.eventType = value;
    else if (field === "data") this.dataLines.push(value);
    // id and retry have no meaning for a one-shot POST stream
  }
}

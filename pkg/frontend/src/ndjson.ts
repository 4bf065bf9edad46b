/**
 * Incremental NDJSON line assembly: socket chunks arrive at arbitrary
 * boundaries; complete lines come out.
 */
export class LineSplitter {
  private tail = "";

  /** Feed one chunk; returns the complete lines it finished. */
  push(chunk: string): string[] {
    this.tail += chunk;
    const parts = this.tail.split("\n");
    this.tail = parts.pop() ?? "";
    return parts.filter((line) => line.trim().length > 0);
  }

  /** Any unterminated trailing text (useful at end of stream). */
  flush(): string[] {
    const rest = this.tail.trim();
    this.tail = "";
    return rest.length > 0 ? [rest] : [];
  }
}

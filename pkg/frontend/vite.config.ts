/// <reference types="vitest/config" />
import { defineConfig } from "vite";

export default defineConfig({
  build: {
    outDir: "dist",
    sourcemap: true,
  },
  test: {
    // Pure-logic and socket tests run under node; DOM tests opt into jsdom
    // with a per-file `@vitest-environment jsdom` pragma.
    environment: "node",
    include: ["test/**/*.test.ts"],
    testTimeout: 30_000,
  },
});

import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the integration suite spawns the python service and renders previews
    testTimeout: 120_000,
    hookTimeout: 180_000,
  },
});

/// <reference types="vitest/config" />
import { defineConfig } from "vite";

// The dev server proxies /api to a running session service:
//   tis serve --config ../configs/bench32.cfg --seed 0 --out-dir ../runs/bench
export default defineConfig({
  server: {
    proxy: {
      "/api": "http://127.0.0.1:8000",
    },
  },
  test: {
    environment: "jsdom",
    setupFiles: ["tests/setup.ts"],
    include: ["tests/**/*.test.ts"],
  },
});

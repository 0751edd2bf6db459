import { defineConfig } from "vitest/config";

export default defineConfig({
  // the service binds localhost:8008 by default; proxy so the dev page
  // and the API share an origin
  server: {
    proxy: {
      "/sessions": "http://127.0.0.1:8008",
    },
  },
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    testTimeout: 120000,
    hookTimeout: 120000,
  },
});

import { ApiClient, ApiError } from "./api.js";
import { renderBanner, renderCow, renderHerd } from "./views.js";

const client = new ApiClient();
const root = document.getElementById("app")!;

async function showHerd(): Promise<void> {
  try {
    renderHerd(root, await client.herd(), showCow);
  } catch (err) {
    const message = err instanceof ApiError
      ? `service unavailable (${err.body.message})`
      : "service unreachable";
    renderBanner(root, message, showHerd);
  }
}

async function showCow(cowId: string): Promise<void> {
  try {
    renderCow(root, client, await client.cow(cowId), showHerd);
  } catch (err) {
    const message = err instanceof ApiError
      ? err.body.message : "service unreachable";
    renderBanner(root, message, showHerd);
  }
}

showHerd();

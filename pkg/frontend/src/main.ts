import { ApiClient } from "./api.js";
import { RaterApp } from "./controller.js";
import { mount } from "./ui.js";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

const api = new ApiClient(param("api", "http://127.0.0.1:8000"));
const app = new RaterApp(api, param("session", ""), param("rater", ""));

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app container");
}
mount(root, app);
void app.start(Number(param("cursor", "0")));

import { SessionController } from "./controller.js";
import { mountConsole } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "http://127.0.0.1:8000";
const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");
mountConsole(root, new SessionController(base));

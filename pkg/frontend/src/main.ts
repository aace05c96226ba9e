import { QuizApi } from "./api.js";
import { QuizApp } from "./quiz.js";
import { getSessionToken } from "./session.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const app = new QuizApp(root, new QuizApi(), getSessionToken());
void app.start();

import { startApp } from "./main.js";

startApp();

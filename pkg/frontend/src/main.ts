import { ApiClient } from "./api";
import { App } from "./app";

function required<T extends HTMLElement>(id: string): T {
  const element = document.getElementById(id);
  if (!element) {
    throw new Error(`missing #${id}`);
  }
  return element as T;
}

const app = new App(new ApiClient(), {
  chat: required("chat"),
  player: required("player"),
  timeline: required("timeline"),
  form: required<HTMLFormElement>("ask-form"),
  input: required<HTMLInputElement>("question"),
  status: required("status"),
});

void app.start();

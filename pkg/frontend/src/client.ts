// Thin socket wrapper; the constructor is injectable so tests can pass a
// Node websocket where the browser provides its own.

import { ClientMessage, ServerMessage, parseServerMessage } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: string, listener: (event: any) => void): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface SessionHandlers {
  onMessage(msg: ServerMessage): void;
  onOpen?(): void;
  onClose?(): void;
}

export class SessionClient {
  private socket: SocketLike;

  constructor(
    url: string,
    handlers: SessionHandlers,
    factory: SocketFactory = (u) => new WebSocket(u) as unknown as SocketLike,
  ) {
    this.socket = factory(url);
    this.socket.addEventListener("open", () => handlers.onOpen?.());
    this.socket.addEventListener("close", () => handlers.onClose?.());
    this.socket.addEventListener("message", (event) => {
      handlers.onMessage(parseServerMessage(String(event.data)));
    });
  }

  send(msg: ClientMessage): void {
    this.socket.send(JSON.stringify(msg));
  }

  close(): void {
    this.socket.close();
  }
}

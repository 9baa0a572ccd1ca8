"""User-space TCP port forwarder for routing through intermediate hosts.

Each upstream connection gets its own downstream connection and two
pump threads copying bytes verbatim, so relays compose into chains and
are transparent to framing and handshakes.  If the downstream address
cannot be reached the upstream side receives an error frame with the
reason before being closed.
"""

from __future__ import annotations

import socket
import threading

from .frame import error_frame


class TcpRelay:
    def __init__(self, forward: tuple[str, int], listen: tuple[str, int] = ("127.0.0.1", 0), buffer_size: int = 1 << 18, connect_timeout: float = 5.0):
        self.forward = tuple(forward)
        self.buffer_size = buffer_size
        self.connect_timeout = connect_timeout
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind(tuple(listen))
        self.sock.listen(512)
        self._conns: list[socket.socket] = []
        self._lock = threading.Lock()
        self._stopped = threading.Event()
        self.bytes_forwarded = 0
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()[:2]

    def _accept_loop(self):
        while not self._stopped.is_set():
            try:
                up, _ = self.sock.accept()
            except OSError:
                return
            threading.Thread(target=self._serve, args=(up,), daemon=True).start()

    def _serve(self, up: socket.socket):
        try:
            down = socket.create_connection(self.forward, timeout=self.connect_timeout)
        except OSError as exc:
            try:
                up.sendall(error_frame(f"relay {self.address[0]}:{self.address[1]}: downstream {self.forward[0]}:{self.forward[1]} unreachable: {exc}"))
            finally:
                up.close()
            return
        down.settimeout(None)
        for s in (up, down):
            s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        with self._lock:
            self._conns += [up, down]
        threading.Thread(target=self._pump, args=(up, down), daemon=True).start()
        threading.Thread(target=self._pump, args=(down, up), daemon=True).start()

    def _pump(self, src: socket.socket, dst: socket.socket):
        buf = bytearray(self.buffer_size)
        view = memoryview(buf)
        try:
            while True:
                n = src.recv_into(view)
                if n == 0:
                    break
                dst.sendall(view[:n])
                self.bytes_forwarded += n
        except OSError:
            pass
        finally:
            try:
                dst.shutdown(socket.SHUT_WR)
            except OSError:
                pass

    def close(self):
        self._stopped.set()
        try:
            self.sock.close()
        except OSError:
            pass
        with self._lock:
            for c in self._conns:
                try:
                    c.close()
                except OSError:
                    pass
            self._conns.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def relay_chain(target: tuple[str, int], hops: int) -> list[TcpRelay]:
    """``hops`` loopback relays in front of ``target``; connect to ``relays[-1].address``."""
    relays = []
    nxt = target
    for _ in range(hops):
        r = TcpRelay(nxt)
        relays.append(r)
        nxt = r.address
    return relays

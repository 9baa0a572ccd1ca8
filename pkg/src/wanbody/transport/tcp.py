"""Parallel-stream TCP channels with chunked I/O and software pacing.

A channel is ``streams`` TCP connections.  Every message is striped
round-robin over them in ``send_chunk`` units; each stream carries one
frame header followed by its slice, so the receiver can rebuild the
message from stream index and offset alone.
"""

from __future__ import annotations

import socket
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor

from .base import Channel, ExchangeTiming, WallClock
from .config import ChannelConfig, TransportError
from .frame import ERROR_MAGIC, HEADER, FrameHeader, error_frame, join_slices, slice_length, split_message, unpack_header

HELLO_MAGIC = b"SUWH"
HELLO = struct.Struct("<4sHIHHI")  # magic, version, channel id, stream index, stream count, send chunk
HELLO_VERSION = 1


def recv_exact(sock: socket.socket, n: int, chunk: int = 1 << 20) -> bytes:
    buf = bytearray(n)
    view = memoryview(buf)
    got = 0
    while got < n:
        k = sock.recv_into(view[got:], min(chunk, n - got))
        if k == 0:
            raise TransportError(f"connection closed after {got} of {n} bytes")
        got += k
    return bytes(buf)


def _read_error_reason(sock: socket.socket, first4: bytes) -> str:
    rest = recv_exact(sock, HEADER.size - 4)
    head = unpack_header(first4 + rest)
    return recv_exact(sock, head.length).decode("utf-8", "replace") if head.length else ""


def _configure(sock: socket.socket, config: ChannelConfig):
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    if config.buffer_size:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF, config.buffer_size)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, config.buffer_size)
    sock.settimeout(config.timeout)


class TcpChannel(Channel):
    def __init__(self, socks: list[socket.socket], config: ChannelConfig, channel_id: int, peer_chunk: int):
        self.socks = socks
        self.config = config
        self.channel_id = channel_id
        self.peer_chunk = peer_chunk
        self.clock = WallClock()
        self._send_pool = ThreadPoolExecutor(len(socks), thread_name_prefix="tx")
        self._recv_pool = ThreadPoolExecutor(len(socks), thread_name_prefix="rx")
        self._xchg_pool = ThreadPoolExecutor(1, thread_name_prefix="xchg")
        self.bytes_sent = 0
        self.bytes_received = 0
        self.last_exchange = None
        self.last_send_seconds = 0.0
        self.closed = False

    @property
    def streams(self) -> int:
        return len(self.socks)

    # ------------------------------------------------------------ sending
    def _send_stream(self, i: int, header: bytes, data: bytes, t0: float):
        sock = self.socks[i]
        rate = self.config.pacing_rate
        chunk = self.config.send_chunk
        S = self.streams
        try:
            sock.sendall(header)
            if rate is None:
                if data:
                    sock.sendall(data)
                return
            view = memoryview(data)
            for k, off in enumerate(range(0, len(view), chunk)):
                # global round-robin position of this chunk
                release = t0 + (k * S + i) * chunk / rate
                delay = release - time.perf_counter()
                if delay > 0:
                    time.sleep(delay)
                sock.sendall(view[off : off + chunk])
        except (OSError, TransportError) as exc:
            raise TransportError(f"stream {i}: send failed: {exc}") from exc

    def send_message(self, payload) -> None:
        if self.closed:
            raise TransportError("channel is closed")
        payload = bytes(payload) if not isinstance(payload, (bytes, bytearray)) else payload
        n = len(payload)
        S = self.streams
        slices = split_message(payload, self.config.send_chunk, S)
        t0 = time.perf_counter()
        futs = [
            self._send_pool.submit(self._send_stream, i, FrameHeader(self.channel_id, n, i, S).pack(), slices[i], t0)
            for i in range(S)
        ]
        errors = [f.exception() for f in futs]
        if self.config.pacing_rate is not None and n:
            end = t0 + n / self.config.pacing_rate
            delay = end - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
        self.last_send_seconds = time.perf_counter() - t0
        for e in errors:
            if e is not None:
                raise e
        self.bytes_sent += n

    # ------------------------------------------------------------ receiving
    def _recv_stream(self, i: int):
        sock = self.socks[i]
        try:
            raw = recv_exact(sock, 4)
            if raw == ERROR_MAGIC:
                raise TransportError(f"stream {i}: peer reported: {_read_error_reason(sock, raw)}")
            head = unpack_header(raw + recv_exact(sock, HEADER.size - 4))
            if head.stream_index != i or head.stream_count != self.streams:
                raise TransportError(f"stream {i}: header claims stream {head.stream_index}/{head.stream_count}")
            if head.channel_id != self.channel_id:
                raise TransportError(f"stream {i}: frame for channel {head.channel_id}")
            size = slice_length(head.length, self.peer_chunk, self.streams, i)
            return head.length, recv_exact(sock, size, self.config.recv_chunk)
        except OSError as exc:
            raise TransportError(f"stream {i}: receive failed: {exc}") from exc

    def recv_message(self) -> bytes:
        if self.closed:
            raise TransportError("channel is closed")
        futs = [self._recv_pool.submit(self._recv_stream, i) for i in range(self.streams)]
        results, errors = [], []
        for f in futs:
            e = f.exception()
            if e is not None:
                errors.append(e)
            else:
                results.append(f.result())
        if errors:
            raise errors[0]
        lengths = {r[0] for r in results}
        if len(lengths) != 1:
            raise TransportError(f"streams disagree on message length: {sorted(lengths)}")
        length = lengths.pop()
        data = join_slices([r[1] for r in results], length, self.peer_chunk, self.streams)
        self.bytes_received += length
        return data

    def begin_exchange(self, payload):
        return (time.perf_counter(), len(payload), self._xchg_pool.submit(self.send_message, payload))

    def finish_exchange(self, token) -> bytes:
        t0, n, fut = token
        try:
            data = self.recv_message()
        finally:
            err = fut.exception()
        if err is not None:
            raise err
        self.last_exchange = ExchangeTiming(n, len(data), 0.0, 0.0, time.perf_counter() - t0)
        return data

    def exchange(self, payload) -> bytes:
        return self.finish_exchange(self.begin_exchange(payload))

    def begin_shift(self, payload):
        return self.begin_exchange(payload)

    def finish_shift(self, token, sent_on: "TcpChannel") -> bytes:
        t0, n, fut = token
        try:
            data = self.recv_message()
        finally:
            err = fut.exception()
        if err is not None:
            raise err
        self.last_exchange = ExchangeTiming(n, len(data), 0.0, 0.0, time.perf_counter() - t0)
        return data

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        for s in self.socks:
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            s.close()
        for pool in (self._send_pool, self._recv_pool, self._xchg_pool):
            pool.shutdown(wait=False)


def connect_channel(address, config: ChannelConfig, channel_id: int = 0) -> TcpChannel:
    """Open ``config.streams`` connections to a listener (or relay) and handshake."""
    S = config.streams
    socks = []
    peer_chunk = None
    try:
        for i in range(S):
            try:
                sock = socket.create_connection(tuple(address), timeout=config.timeout)
            except OSError as exc:
                raise TransportError(f"stream {i}: connect to {address} failed: {exc}") from exc
            _configure(sock, config)
            socks.append(sock)
            sock.sendall(HELLO.pack(HELLO_MAGIC, HELLO_VERSION, channel_id, i, S, config.send_chunk))
        for i, sock in enumerate(socks):
            try:
                first = recv_exact(sock, 4)
                if first == ERROR_MAGIC:
                    raise TransportError(f"stream {i}: connection refused: {_read_error_reason(sock, first)}")
                magic, version, cid, idx, count, chunk = HELLO.unpack(first + recv_exact(sock, HELLO.size - 4))
            except OSError as exc:
                raise TransportError(f"stream {i}: handshake failed: {exc}") from exc
            if magic != HELLO_MAGIC or version != HELLO_VERSION or cid != channel_id or idx != i or count != S:
                raise TransportError(f"stream {i}: handshake mismatch")
            if peer_chunk is not None and chunk != peer_chunk:
                raise TransportError("peer advertised different chunk sizes on different streams")
            peer_chunk = chunk
    except BaseException:
        for s in socks:
            s.close()
        raise
    return TcpChannel(socks, config, channel_id, peer_chunk)


class TcpListener:
    """Accepts parallel-stream channels on one port."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, config: ChannelConfig | None = None):
        self.config = config or ChannelConfig(backend="tcp")
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(512)
        self._pending: dict[int, dict[int, tuple[socket.socket, int, int]]] = {}
        self._lock = threading.Lock()

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()[:2]

    def accept(self, channel_id: int | None = None, timeout: float | None = None) -> TcpChannel:
        """Block until every stream of one channel has connected."""
        deadline = time.monotonic() + (timeout if timeout is not None else self.config.timeout)
        while True:
            with self._lock:
                for cid, streams in self._pending.items():
                    if channel_id is not None and cid != channel_id:
                        continue
                    count = next(iter(streams.values()))[1]
                    if len(streams) == count:
                        del self._pending[cid]
                        return self._finish(cid, streams, count)
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TransportError("timed out waiting for all streams of a channel")
            self.sock.settimeout(remaining)
            try:
                conn, _ = self.sock.accept()
            except socket.timeout:
                raise TransportError("timed out waiting for all streams of a channel") from None
            _configure(conn, self.config)
            magic, version, cid, idx, count, chunk = HELLO.unpack(recv_exact(conn, HELLO.size))
            if magic != HELLO_MAGIC or version != HELLO_VERSION or not idx < count:
                conn.sendall(error_frame(f"bad handshake from stream {idx}"))
                conn.close()
                continue
            with self._lock:
                self._pending.setdefault(cid, {})[idx] = (conn, count, chunk)

    def _finish(self, cid: int, streams: dict, count: int) -> TcpChannel:
        socks = [streams[i][0] for i in range(count)]
        chunks = {streams[i][2] for i in range(count)}
        if len(chunks) != 1:
            for s in socks:
                s.close()
            raise TransportError("streams advertised different chunk sizes")
        cfg = self.config.with_(streams=count)
        for i, s in enumerate(socks):
            s.sendall(HELLO.pack(HELLO_MAGIC, HELLO_VERSION, cid, i, count, cfg.send_chunk))
        return TcpChannel(socks, cfg, cid, chunks.pop())

    def close(self):
        self.sock.close()
        with self._lock:
            for streams in self._pending.values():
                for conn, _, _ in streams.values():
                    conn.close()
            self._pending.clear()


def tcp_pair(config: ChannelConfig, channel_id: int = 0, address=None) -> tuple[TcpChannel, TcpChannel]:
    """Connected loopback channel pair (client end first)."""
    listener = TcpListener("127.0.0.1", 0, config)
    try:
        box = {}

        def serve():
            try:
                box["srv"] = listener.accept(channel_id)
            except BaseException as exc:  # pragma: no cover - reported below
                box["err"] = exc

        t = threading.Thread(target=serve, daemon=True)
        t.start()
        client = connect_channel(address or listener.address, config, channel_id)
        t.join(config.timeout)
        if "err" in box:
            raise box["err"]
        return client, box["srv"]
    finally:
        listener.close()

"""Framed TCP telemetry: sample frames plus LF-terminated control lines on
one connection.

Wire format, little-endian:
  magic 0xA5 0x5A | flags u8 (bit 0 = accel present) | seq u32 |
  timestamp_us u64 | 8 x i32 EEG counts | battery u8 | marker u8 |
  [3 x i16 accel] | CRC-16/CCITT-FALSE over all preceding bytes (u16 LE)
51 bytes without accel, 57 with.

The device server runs a fixed-rate producer on a monotonic clock and a
separate transmitter draining a bounded drop-oldest queue, so the producer
never blocks on, or observes, the socket. TRIAL_START/TRIAL_STOP control
lines arrive from the client; on stop the buffered trial is decoded and a
"DECISION <hz> <rho>" line is sent back between frames.
"""

from __future__ import annotations

import math
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .analytics import JitterStats, jitter_stats_from_intervals
from .cca import build_reference_bank, classify
from .core import AcquisitionConfig, Epoch
from .errors import StreamError
from .filters import BINARY64, FilterSpec, design_butterworth_bandpass, filtfilt

MAGIC = b"\xa5\x5a"
FLAG_ACCEL = 0x01
FRAME_LEN = 51
FRAME_LEN_ACCEL = 57
EEG_CHANNELS = 8
_I24_MIN, _I24_MAX = -(2**23), 2**23 - 1
DEFAULT_PORT = 5150

MARKER_NONE = 0
MARKER_TRIAL_START = 1
MARKER_TRIAL_STOP = 2

_HEAD = struct.Struct("<BIQ8iBB")  # after magic, before accel/crc
_ACCEL = struct.Struct("<3h")
_CRC = struct.Struct("<H")

# CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xor-out
_CRC_TABLE = []
for _byte in range(256):
    _r = _byte << 8
    for _ in range(8):
        _r = ((_r << 1) ^ 0x1021) & 0xFFFF if _r & 0x8000 else (_r << 1) & 0xFFFF
    _CRC_TABLE.append(_r)


def crc16_ccitt_false(data: bytes) -> int:
    crc = 0xFFFF
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[((crc >> 8) ^ b) & 0xFF]
    return crc


class FrameMagicError(StreamError):
    """Bytes at the expected frame boundary are not a frame (resync signal)."""


class FrameCrcError(StreamError):
    """Frame checksum mismatch."""


class FrameTruncatedError(StreamError):
    """Not enough bytes for a complete frame."""


@dataclass(frozen=True)
class StreamFrame:
    seq: int
    timestamp_us: int
    eeg_counts: tuple
    battery_pct: int
    event_marker: int = MARKER_NONE
    accel: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "eeg_counts", tuple(int(v) for v in self.eeg_counts))
        if len(self.eeg_counts) != EEG_CHANNELS:
            raise StreamError(f"expected {EEG_CHANNELS} EEG counts, got {len(self.eeg_counts)}")
        for v in self.eeg_counts:
            if not (_I24_MIN <= v <= _I24_MAX):
                raise StreamError(f"EEG count {v} outside 24-bit signed range")
        if not (0 <= self.battery_pct <= 100):
            raise StreamError(f"battery_pct {self.battery_pct} outside 0-100")
        if not (0 <= self.event_marker <= 255):
            raise StreamError(f"event_marker {self.event_marker} outside u8 range")
        if self.accel is not None:
            object.__setattr__(self, "accel", tuple(int(v) for v in self.accel))
            if len(self.accel) != 3:
                raise StreamError("accel must have exactly 3 axes")

    @property
    def flags(self) -> int:
        return FLAG_ACCEL if self.accel is not None else 0


def encode_frame(frame: StreamFrame) -> bytes:
    body = MAGIC + _HEAD.pack(
        frame.flags,
        frame.seq & 0xFFFFFFFF,
        frame.timestamp_us,
        *frame.eeg_counts,
        frame.battery_pct,
        frame.event_marker,
    )
    if frame.accel is not None:
        body += _ACCEL.pack(*frame.accel)
    return body + _CRC.pack(crc16_ccitt_false(body))


def decode_frame(data: bytes) -> tuple[StreamFrame, int]:
    """Decode one frame from the start of data; returns (frame, bytes consumed).
    CRC is verified before any field is trusted."""
    if len(data) < 3:
        raise FrameTruncatedError("need at least 3 bytes")
    if data[:2] != MAGIC:
        raise FrameMagicError(f"bad magic {data[:2].hex()}")
    flags = data[2]
    total = FRAME_LEN_ACCEL if flags & FLAG_ACCEL else FRAME_LEN
    if len(data) < total:
        raise FrameTruncatedError(f"need {total} bytes, have {len(data)}")
    (stored_crc,) = _CRC.unpack_from(data, total - 2)
    if crc16_ccitt_false(data[: total - 2]) != stored_crc:
        raise FrameCrcError("CRC mismatch")
    fields = _HEAD.unpack_from(data, 2)
    accel = _ACCEL.unpack_from(data, 2 + _HEAD.size) if flags & FLAG_ACCEL else None
    frame = StreamFrame(
        seq=fields[1],
        timestamp_us=fields[2],
        eeg_counts=fields[3:11],
        battery_pct=fields[11],
        event_marker=fields[12],
        accel=accel,
    )
    return frame, total


class StreamDemux:
    """Incremental parser for the mixed frame/line stream. feed() returns a
    list of ('frame', StreamFrame) and ('line', str) events; corrupted bytes
    are skipped until the next magic (counted), giving resynchronization."""

    def __init__(self, desync_limit: int = 1 << 20):
        self._buf = bytearray()
        self.crc_errors = 0
        self.resync_bytes = 0
        self.desync_limit = desync_limit

    def feed(self, data: bytes) -> list:
        self._buf.extend(data)
        events = []
        while True:
            if len(self._buf) < 2:
                break
            if self._buf[:2] == MAGIC:
                try:
                    frame, used = decode_frame(bytes(self._buf))
                except FrameTruncatedError:
                    break
                except FrameCrcError:
                    self.crc_errors += 1
                    del self._buf[:2]
                    self.resync_bytes += 2
                    continue
                events.append(("frame", frame))
                del self._buf[:used]
                continue
            # not at a frame boundary: either a control line or garbage
            magic_at = bytes(self._buf).find(MAGIC)
            lf_at = bytes(self._buf).find(b"\n")
            if lf_at != -1 and (magic_at == -1 or lf_at < magic_at):
                raw = bytes(self._buf[:lf_at])
                del self._buf[: lf_at + 1]
                try:
                    text = raw.decode("ascii").strip()
                except UnicodeDecodeError:
                    self.resync_bytes += lf_at + 1
                    continue
                if text:
                    events.append(("line", text))
                continue
            if magic_at > 0:
                self.resync_bytes += magic_at
                del self._buf[:magic_at]
                continue
            if len(self._buf) > self.desync_limit:
                raise StreamError(
                    f"protocol desync: {len(self._buf)} bytes without a valid frame or line"
                )
            break
        return events


# ---------------------------------------------------------------------------
# Bounded drop-oldest queue
# ---------------------------------------------------------------------------

class _FrameQueue:
    """Bounded queue. Frames are dropped oldest-first on overflow; control
    lines are never dropped."""

    def __init__(self, depth: int):
        self.depth = depth
        self._items: list[tuple[str, bytes]] = []
        self._lock = threading.Lock()
        self._cv = threading.Condition(self._lock)
        self.dropped = 0
        self.high_watermark = 0
        self._closed = False

    def put_frame(self, payload: bytes) -> None:
        with self._cv:
            frames = sum(1 for kind, _ in self._items if kind == "frame")
            if frames >= self.depth:
                for i, (kind, _) in enumerate(self._items):
                    if kind == "frame":
                        del self._items[i]
                        self.dropped += 1
                        break
            self._items.append(("frame", payload))
            self.high_watermark = max(self.high_watermark, len(self._items))
            self._cv.notify()

    def put_line(self, payload: bytes) -> None:
        with self._cv:
            self._items.append(("line", payload))
            self.high_watermark = max(self.high_watermark, len(self._items))
            self._cv.notify()

    def get(self, timeout: float = 0.1) -> Optional[bytes]:
        with self._cv:
            if not self._items:
                self._cv.wait(timeout)
            if not self._items:
                return None
            return self._items.pop(0)[1]

    def close(self) -> None:
        with self._cv:
            self._closed = True
            self._cv.notify_all()


# ---------------------------------------------------------------------------
# Frame sources
# ---------------------------------------------------------------------------

class SsvepFrameSource:
    """Per-tick synthetic SSVEP sample in ADC counts: identical sinusoid on
    all channels plus independent Gaussian noise."""

    def __init__(
        self,
        target_hz: float,
        config: AcquisitionConfig = AcquisitionConfig(),
        amplitude_uv: float = 1.0,
        harmonic2_uv: float = 0.4,
        noise_rms_uv: float = 0.2,
        seed: int = 0,
        battery_pct: int = 100,
    ):
        self.target_hz = target_hz
        self.config = config
        self.amplitude_uv = amplitude_uv
        self.harmonic2_uv = harmonic2_uv
        self.noise_rms_uv = noise_rms_uv
        self.battery_pct = battery_pct
        self._rng = np.random.default_rng(seed)

    def __call__(self, seq: int, timestamp_us: int, marker: int) -> StreamFrame:
        t = seq / self.config.sample_rate_hz
        uv = self.amplitude_uv * math.sin(2 * math.pi * self.target_hz * t)
        uv += self.harmonic2_uv * math.sin(2 * math.pi * 2 * self.target_hz * t)
        noise = self._rng.normal(0.0, self.noise_rms_uv, size=EEG_CHANNELS) if self.noise_rms_uv > 0 else np.zeros(EEG_CHANNELS)
        counts = np.round((uv + noise) / self.config.uv_per_count).astype(np.int64)
        counts = np.clip(counts, _I24_MIN, _I24_MAX)
        return StreamFrame(
            seq=seq,
            timestamp_us=timestamp_us,
            eeg_counts=tuple(int(c) for c in counts),
            battery_pct=self.battery_pct,
            event_marker=marker,
        )


# ---------------------------------------------------------------------------
# Device server
# ---------------------------------------------------------------------------

@dataclass
class SessionStats:
    frames_generated: int = 0
    frames_sent: int = 0
    frames_dropped: int = 0
    queue_high_watermark: int = 0
    tick_period_stats: Optional[JitterStats] = None


class DeviceServer:
    """Simulated acquisition device: fixed-rate ticker plus TCP transmitter.

    One client per session; the session ends when the client disconnects or
    duration_s elapses, and run() returns the SessionStats.
    """

    def __init__(
        self,
        source: Callable[[int, int, int], StreamFrame],
        port: int = DEFAULT_PORT,
        host: str = "127.0.0.1",
        queue_depth: int = 256,
        rate_hz: float = 500.0,
        duration_s: Optional[float] = None,
        config: AcquisitionConfig = AcquisitionConfig(),
        frequencies: Sequence[float] = (7.0, 7.5, 8.0, 8.5, 9.0, 11.0),
        harmonics: int = 2,
        sndbuf: int = 16384,
    ):
        self.source = source
        self.port = port
        self.host = host
        self.queue_depth = queue_depth
        self.rate_hz = rate_hz
        self.duration_s = duration_s
        self.config = config
        self.frequencies = tuple(frequencies)
        self.harmonics = harmonics
        self.sndbuf = sndbuf
        self._stop = threading.Event()
        self._ready = threading.Event()
        self.bound_port: Optional[int] = None

    def stop(self) -> None:
        self._stop.set()

    def wait_ready(self, timeout: float = 5.0) -> bool:
        return self._ready.wait(timeout)

    def run(self) -> SessionStats:
        stats = SessionStats()
        try:
            listener = socket.create_server((self.host, self.port))
        except OSError as exc:
            raise StreamError(f"cannot bind {self.host}:{self.port}: {exc}") from exc
        with listener:
            self.bound_port = listener.getsockname()[1]
            listener.settimeout(0.2)
            self._ready.set()
            conn = None
            deadline = time.monotonic() + self.duration_s if self.duration_s else None
            while conn is None and not self._stop.is_set():
                if deadline and time.monotonic() > deadline:
                    return stats
                try:
                    conn, _ = listener.accept()
                except socket.timeout:
                    continue
            if conn is None:
                return stats
            with conn:
                conn.setsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF, self.sndbuf)
                self._serve_session(conn, stats)
        return stats

    def _serve_session(self, conn: socket.socket, stats: SessionStats) -> None:
        queue = _FrameQueue(self.queue_depth)
        dead = threading.Event()
        tick_times_us: list[float] = []
        trial_lock = threading.Lock()
        trial_active = [False]
        trial_samples: list[np.ndarray] = []  # per-tick uV vectors
        marker_box = [MARKER_NONE]
        send_failed = [0]
        period = 1.0 / self.rate_hz
        t_origin = time.monotonic_ns()

        def ticker() -> None:
            # fixed cadence from the monotonic clock only; never touches the
            # socket or the queue's fill state
            seq = 0
            next_t = time.monotonic()
            end_t = next_t + self.duration_s if self.duration_s else None
            while not self._stop.is_set() and not dead.is_set():
                now = time.monotonic()
                if end_t and now >= end_t:
                    break
                delay = next_t - now
                if delay > 0:
                    # coarse sleep, then spin the last stretch: bare sleep()
                    # overshoot would dominate the measured tick jitter
                    if delay > 0.0005:
                        time.sleep(delay - 0.0005)
                    while time.monotonic() < next_t:
                        pass
                tick_times_us.append(time.perf_counter() * 1e6)
                ts_us = (time.monotonic_ns() - t_origin) // 1000
                with trial_lock:
                    marker = marker_box[0]
                    marker_box[0] = MARKER_NONE
                    frame = self.source(seq, int(ts_us), marker)
                    if trial_active[0]:
                        uv = np.asarray(frame.eeg_counts, dtype=np.float64) * self.config.uv_per_count
                        trial_samples.append(uv)
                queue.put_frame(encode_frame(frame))
                stats.frames_generated += 1
                seq += 1
                next_t += period
            dead.set()
            queue.close()

        def sender() -> None:
            while True:
                payload = queue.get(timeout=0.1)
                if payload is None:
                    if dead.is_set():
                        break
                    continue
                try:
                    conn.sendall(payload)
                    if payload[:2] == MAGIC:
                        stats.frames_sent += 1
                except OSError:
                    if payload[:2] == MAGIC:
                        send_failed[0] += 1
                    dead.set()
                    break

        def reader() -> None:
            import select

            buf = b""
            while not dead.is_set():
                try:
                    readable, _, _ = select.select([conn], [], [], 0.2)
                except (OSError, ValueError):
                    break
                if not readable:
                    continue
                try:
                    chunk = conn.recv(4096)
                except OSError:
                    break
                if not chunk:
                    break
                buf += chunk
                while b"\n" in buf:
                    line, buf = buf.split(b"\n", 1)
                    self._handle_control(line.decode("ascii", "replace").strip(),
                                         trial_lock, trial_active, trial_samples,
                                         marker_box, queue)
            dead.set()

        threads = {name: threading.Thread(target=f, daemon=True, name=name)
                   for name, f in (("ticker", ticker), ("sender", sender), ("reader", reader))}
        for t in threads.values():
            t.start()
        threads["ticker"].join()
        threads["sender"].join(timeout=5.0)
        if threads["sender"].is_alive():
            # client never drained; force the blocked sendall to fail
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            threads["sender"].join(timeout=2.0)
        threads["reader"].join(timeout=2.0)
        # whatever is still queued was never delivered
        remaining = sum(1 for kind, _ in queue._items if kind == "frame")
        stats.frames_dropped = queue.dropped + send_failed[0] + remaining
        stats.queue_high_watermark = queue.high_watermark
        if len(tick_times_us) >= 2:
            stats.tick_period_stats = jitter_stats_from_intervals(np.diff(tick_times_us))

    def _handle_control(self, line, trial_lock, trial_active, trial_samples,
                        marker_box, queue: _FrameQueue) -> None:
        if line == "TRIAL_START":
            with trial_lock:
                trial_active[0] = True
                trial_samples.clear()
                marker_box[0] = MARKER_TRIAL_START
        elif line == "TRIAL_STOP":
            with trial_lock:
                trial_active[0] = False
                marker_box[0] = MARKER_TRIAL_STOP
                data = np.array(trial_samples).T if trial_samples else None
                trial_samples.clear()
            if data is None or data.shape[1] < 1:
                queue.put_line(b"DECISION ERROR empty-trial\n")
                return
            try:
                hz, rho = self._decode_trial(data)
                queue.put_line(f"DECISION {hz:g} {rho:.6f}\n".encode("ascii"))
            except Exception as exc:
                queue.put_line(f"DECISION ERROR {type(exc).__name__}\n".encode("ascii"))

    def _decode_trial(self, data: np.ndarray) -> tuple[float, float]:
        fs = self.config.sample_rate_hz
        window = int(round(4 * fs))
        if data.shape[1] >= window:
            data = data[:, -window:]
        epoch = Epoch(self.config, data)
        coeffs = design_butterworth_bandpass(FilterSpec(sample_rate_hz=fs), BINARY64)
        filtered = filtfilt(coeffs, epoch)
        bank = build_reference_bank(self.frequencies, self.harmonics, epoch.sample_count, fs, BINARY64)
        decision = classify(filtered, bank)
        return decision.predicted_hz, decision.rho_peak


def run_device_server(
    source: Callable[[int, int, int], StreamFrame],
    port: int = DEFAULT_PORT,
    queue_depth: int = 256,
    rate_hz: float = 500.0,
    **kwargs,
) -> SessionStats:
    return DeviceServer(source, port=port, queue_depth=queue_depth, rate_hz=rate_hz, **kwargs).run()


# ---------------------------------------------------------------------------
# Client
# ---------------------------------------------------------------------------

@dataclass
class ClientStats:
    frames_received: int = 0
    gap_count: int = 0
    gap_total: int = 0
    crc_errors: int = 0
    resync_bytes: int = 0
    decisions: list = field(default_factory=list)
    clean_shutdown: bool = True


def run_client(
    host: str = "127.0.0.1",
    port: int = DEFAULT_PORT,
    duration_s: Optional[float] = None,
    stall_at_s: Optional[float] = None,
    stall_for_s: float = 0.0,
    trial_s: Optional[float] = None,
    on_frame: Optional[Callable[[StreamFrame], None]] = None,
    rcvbuf: Optional[int] = None,
) -> ClientStats:
    """Ingest the frame stream, detect sequence gaps, optionally stall
    (stop reading) mid-session, and optionally drive one trial handshake.

    ``rcvbuf`` caps the kernel receive buffer (set before connect, so the
    advertised TCP window shrinks too); without it a stalled reader's backlog
    is silently absorbed by default-sized kernel buffers and the server never
    sees backpressure."""
    stats = ClientStats()
    demux = StreamDemux()
    try:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        if rcvbuf is not None:
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, rcvbuf)
        sock.settimeout(5.0)
        sock.connect((host, port))
    except OSError as exc:
        sock.close()
        raise StreamError(f"connection to {host}:{port} refused: {exc}") from exc
    expected_seq: Optional[int] = None
    start = time.monotonic()
    trial_started = False
    trial_stopped = False
    stalled = False
    with sock:
        sock.settimeout(0.2)
        while True:
            now = time.monotonic() - start
            if duration_s is not None and now >= duration_s:
                break
            if trial_s is not None:
                if not trial_started and now >= 0.2:
                    sock.sendall(b"TRIAL_START\n")
                    trial_started = True
                    trial_t0 = now
                elif trial_started and not trial_stopped and now - trial_t0 >= trial_s:
                    sock.sendall(b"TRIAL_STOP\n")
                    trial_stopped = True
            if stall_at_s is not None and not stalled and now >= stall_at_s:
                time.sleep(stall_for_s)
                stalled = True
                continue
            try:
                chunk = sock.recv(65536)
            except socket.timeout:
                continue
            except OSError:
                stats.clean_shutdown = False
                break
            if not chunk:
                if duration_s is not None and now < duration_s:
                    stats.clean_shutdown = trial_stopped or trial_s is None
                break
            for kind, payload in demux.feed(chunk):
                if kind == "frame":
                    stats.frames_received += 1
                    if expected_seq is not None and payload.seq != expected_seq:
                        gap = payload.seq - expected_seq
                        if gap > 0:
                            stats.gap_count += 1
                            stats.gap_total += gap
                    expected_seq = payload.seq + 1
                    if on_frame:
                        on_frame(payload)
                else:
                    stats.decisions.append(payload)
                    if trial_stopped:
                        # decision received: the handshake is complete
                        stats.crc_errors = demux.crc_errors
                        stats.resync_bytes = demux.resync_bytes
                        return stats
    stats.crc_errors = demux.crc_errors
    stats.resync_bytes = demux.resync_bytes
    return stats

"""Flow-field persistence.

Container layout (byte-level details in docs/file-formats.md): an ASCII
header of "key value" lines starting with "ZNAV-FLOW <version>" and
ending with one empty line, followed by a binary payload. Mode-sum
payloads hold one 32-byte record per mode (k_x, k_y as int32 LE;
amplitude, phase, decorrelation_rate as float64 LE); gridded payloads
hold the u then v node arrays as row-major float64 LE. Unsteady mode
sums persist their path parameters in the header and regenerate the
seeded phase paths bit-identically on import.
"""

import math

import numpy as np

from .flowfield import (AnalyticFlow, FlowField, FourierMode, GriddedFlow,
                        ModeSumFlow, SpectrumSpec)

FLOW_MAGIC = "ZNAV-FLOW"
FLOW_VERSION = 1

_MODE_RECORD = np.dtype([("kx", "<i4"), ("ky", "<i4"), ("amplitude", "<f8"),
                         ("phase", "<f8"), ("rate", "<f8")])


class FlowFormatError(ValueError):
    """Malformed flow file; byte_offset locates the problem."""

    def __init__(self, message, byte_offset=None):
        if byte_offset is not None:
            message = f"{message} (at byte {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class FlowVersionError(FlowFormatError):
    """Flow file with an unsupported version tag."""


def export_flow(flow, path):
    """Write any FlowField so that import_flow evaluates identically."""
    lines = [f"{FLOW_MAGIC} {FLOW_VERSION}",
             f"kind {flow.kind}",
             f"L {flow.L!r}",
             f"time_dependent {1 if flow.time_dependent else 0}"]
    if isinstance(flow, AnalyticFlow):
        lines.append(f"name {flow.name}")
        for key in sorted(flow.params):
            lines.append(f"param_{key} {flow.params[key]!r}")
        payload = b""
    elif isinstance(flow, ModeSumFlow):
        if flow.spec is not None:
            s = flow.spec
            lines.append(f"spec {s.k_min} {s.k_max} {s.slope!r} "
                         f"{s.energy_scale!r} {s.seed}")
        if flow.time_dependent:
            lines.append(f"unsteady {flow.seed} {flow.phase_sigma!r} "
                         f"{flow.horizon!r} {flow.path_dt!r}")
        lines.append(f"n_modes {len(flow.modes)}")
        rec = np.empty(len(flow.modes), dtype=_MODE_RECORD)
        for i, m in enumerate(flow.modes):
            rec[i] = (m.wavevector[0], m.wavevector[1], m.amplitude,
                      m.phase, m.decorrelation_rate)
        payload = rec.tobytes()
    elif isinstance(flow, GriddedFlow):
        nx, ny = flow.grid_shape
        lines.append(f"nx {nx}")
        lines.append(f"ny {ny}")
        payload = (flow._grids[0].astype("<f8").tobytes()
                   + flow._grids[1].astype("<f8").tobytes())
    else:
        raise TypeError(f"cannot export flow of type {type(flow).__name__}")
    lines.append(f"payload {len(payload)}")
    header = "\n".join(lines) + "\n\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload)


def _parse_header(blob):
    head_end = blob.find(b"\n\n")
    if head_end < 0:
        raise FlowFormatError("no empty line terminating the header",
                              byte_offset=len(blob))
    fields = {}
    offset = 0
    first = True
    for raw in blob[:head_end].split(b"\n"):
        try:
            line = raw.decode("ascii")
        except UnicodeDecodeError as exc:
            raise FlowFormatError(f"non-ASCII header line: {exc}",
                                  byte_offset=offset) from exc
        if first:
            parts = line.split()
            if len(parts) != 2 or parts[0] != FLOW_MAGIC:
                raise FlowFormatError(
                    f"expected '{FLOW_MAGIC} <version>', got {line!r}",
                    byte_offset=0)
            if parts[1] != str(FLOW_VERSION):
                raise FlowVersionError(
                    f"unsupported flow version tag {parts[1]!r} "
                    f"(supported: {FLOW_VERSION})", byte_offset=offset)
            first = False
        else:
            key, sep, val = line.partition(" ")
            if not sep or not key:
                raise FlowFormatError(f"malformed header line {line!r}",
                                      byte_offset=offset)
            fields[key] = (val, offset)
        offset += len(raw) + 1
    return fields, head_end + 2


def _field(fields, key, conv, payload_start, required=True, default=None):
    if key not in fields:
        if required:
            raise FlowFormatError(f"missing header field {key!r}",
                                  byte_offset=payload_start)
        return default
    val, offset = fields[key]
    try:
        return conv(val)
    except ValueError as exc:
        raise FlowFormatError(f"bad value for {key!r}: {val!r}",
                              byte_offset=offset) from exc


def import_flow(path):
    """Read a flow container written by export_flow."""
    with open(path, "rb") as fh:
        blob = fh.read()
    fields, payload_start = _parse_header(blob)
    payload_len = _field(fields, "payload", int, payload_start)
    payload = blob[payload_start:]
    if len(payload) != payload_len:
        raise FlowFormatError(
            f"truncated payload: header declares {payload_len} bytes, "
            f"found {len(payload)}", byte_offset=len(blob))
    kind = _field(fields, "kind", str, payload_start)
    L = _field(fields, "L", float, payload_start)

    if kind == "analytic":
        name = _field(fields, "name", str, payload_start)
        params = {k[len("param_"):]: float(v[0])
                  for k, v in fields.items() if k.startswith("param_")}
        try:
            return AnalyticFlow(name, params=params, L=L)
        except ValueError as exc:
            raise FlowFormatError(str(exc), byte_offset=payload_start) from exc

    if kind == "modesum":
        n_modes = _field(fields, "n_modes", int, payload_start)
        expect = n_modes * _MODE_RECORD.itemsize
        if payload_len != expect:
            raise FlowFormatError(
                f"mode payload holds {payload_len} bytes, expected {expect} "
                f"for {n_modes} records", byte_offset=payload_start)
        rec = np.frombuffer(payload, dtype=_MODE_RECORD)
        try:
            modes = [FourierMode((int(r["kx"]), int(r["ky"])),
                                 float(r["amplitude"]), float(r["phase"]),
                                 float(r["rate"])) for r in rec]
        except ValueError as exc:
            raise FlowFormatError(f"bad mode record: {exc}",
                                  byte_offset=payload_start) from exc
        spec = None
        if "spec" in fields:
            k_min, k_max, slope, scale, seed = fields["spec"][0].split()
            spec = SpectrumSpec(k_min=int(k_min), k_max=int(k_max),
                                slope=float(slope), energy_scale=float(scale),
                                seed=int(seed))
        kwargs = {}
        if "unsteady" in fields:
            seed, sigma, horizon, path_dt = fields["unsteady"][0].split()
            kwargs = {"seed": int(seed), "phase_sigma": float(sigma),
                      "horizon": float(horizon), "path_dt": float(path_dt)}
        try:
            return ModeSumFlow(modes, L=L, spec=spec, **kwargs)
        except ValueError as exc:
            raise FlowFormatError(str(exc), byte_offset=payload_start) from exc

    if kind == "gridded":
        nx = _field(fields, "nx", int, payload_start)
        ny = _field(fields, "ny", int, payload_start)
        expect = 2 * nx * ny * 8
        if payload_len != expect:
            raise FlowFormatError(
                f"gridded payload holds {payload_len} bytes, expected "
                f"{expect} for {nx}x{ny} nodes", byte_offset=payload_start)
        half = nx * ny * 8
        u = np.frombuffer(payload[:half], dtype="<f8").reshape(nx, ny)
        v = np.frombuffer(payload[half:], dtype="<f8").reshape(nx, ny)
        return GriddedFlow(u, v, L=L)

    raise FlowFormatError(f"unknown flow kind {kind!r}",
                          byte_offset=fields["kind"][1])

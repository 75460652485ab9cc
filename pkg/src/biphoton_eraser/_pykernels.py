"""Pure-Python reference kernels, used when the compiled extension is unavailable."""
import numpy as np


def match_window(d0_times, idler_times, consumed, delay, window, policy, lo=0):
    """Greedy time-ordered matching of D0 clicks to idler clicks.

    For each D0 time t (ascending) consider unconsumed idler times u with
    2 * |u - t - delay| < window. ``policy`` 0 picks the smallest |u - t - delay|
    (earliest on ties), 1 picks the earliest. The chosen idler is marked in
    ``consumed`` (modified in place). ``lo`` is the first idler index that can
    still match; it only moves forward and is returned for streaming carry-over.

    Returns ``(match, lo)`` with ``match[i]`` the idler index for D0 ``i`` or -1.
    """
    d0 = d0_times.tolist()
    idl = idler_times.tolist()
    used = consumed
    ni = len(idl)
    match = [-1] * len(d0)
    for i, t0 in enumerate(d0):
        t = t0 + delay
        while lo < ni and 2 * (idl[lo] - t) <= -window:
            lo += 1
        best = -1
        best_r = 0
        j = lo
        while j < ni:
            r = idl[j] - t
            if 2 * r >= window:
                break
            if not used[j]:
                ar = r if r >= 0 else -r
                if best < 0 or ar < best_r:
                    best = j
                    best_r = ar
                    if policy == 1:
                        break
            j += 1
        if best >= 0:
            used[best] = 1
            match[i] = best
    return np.asarray(match, dtype=np.int64), lo


_DETECTORS = {"D0": 0, "D1": 1, "D2": 2, "D3": 3, "D4": 4}
MAX_DIGITS = 18


def format_rows(event_id, detector, time_ps, x_um):
    """Event rows as ASCII bytes, one LF-terminated line per event."""
    rows = []
    append = rows.append
    for eid, det, t, x in zip(event_id.tolist(), detector.tolist(), time_ps.tolist(),
                              x_um.tolist()):
        if det == 0:
            append(f"{eid},D0,{t},{x}\n")
        else:
            append(f"{eid},D{det},{t},\n")
    return "".join(rows).encode("ascii")


def _digits(text, name, signed=False):
    body = text[1:] if signed and text.startswith("-") else text
    if not body or not body.isascii() or not body.isdigit():
        raise ValueError(f"{name} is not a decimal integer: {text!r}")
    if len(body) > MAX_DIGITS:
        raise ValueError(f"{name} has more than {MAX_DIGITS} digits")
    return int(text)


def parse_row(line, last_t, last_id):
    """Validate one row (without its LF) against the ordering state.

    Returns ``(event_id, detector, time_ps, x_um)``; raises ``ValueError`` with a
    description of the first violation.
    """
    if "\r" in line:
        raise ValueError("CR characters are not allowed (LF line endings)")
    fields = line.split(",")
    if len(fields) != 4:
        raise ValueError(f"expected 4 fields, got {len(fields)}")
    eid_s, det_s, t_s, x_s = fields
    eid = _digits(eid_s, "event_id")
    det = _DETECTORS.get(det_s)
    if det is None:
        raise ValueError(f"unknown detector {det_s!r}")
    t = _digits(t_s, "time_ps")
    if det == 0:
        if x_s == "":
            raise ValueError("D0 row is missing x_um")
        x = _digits(x_s, "x_um", signed=True)
    elif x_s != "":
        raise ValueError(f"x_um given on non-D0 row ({det_s})")
    else:
        x = 0
    if t < last_t:
        raise ValueError(f"time_ps decreases ({t} < {last_t})")
    if t == last_t and eid <= last_id:
        raise ValueError("rows with equal time_ps must have increasing event_id")
    return eid, det, t, x


def parse_rows(data, last_t, last_id):
    """Reference for the compiled ``parse_rows``; same return convention."""
    ids, dets, times, xs = [], [], [], []
    error_row = -1
    lines = bytes(data).split(b"\n")[:-1]
    for row, raw in enumerate(lines):
        try:
            eid, det, t, x = parse_row(raw.decode("ascii", errors="replace"), last_t, last_id)
        except ValueError:
            error_row = row
            break
        ids.append(eid)
        dets.append(det)
        times.append(t)
        xs.append(x)
        last_t, last_id = t, eid
    return (np.array(ids, dtype=np.uint64), np.array(dets, dtype=np.int8),
            np.array(times, dtype=np.int64), np.array(xs, dtype=np.int64),
            error_row, last_t, last_id)

#!/usr/bin/env python3
"""Regenerate fixtures/e2e: a small store (catalog, annotations, one
project) plus golden.wav, the expected 48 kHz render of that project.

The mixer below is written from the rendering rules alone and shares no code
with the Rust implementation. Asset samples are integers so that nothing
depends on a platform's libm.

    python3 tools/make_fixture.py            # writes fixtures/e2e
"""

import hashlib
import json
import math
import os
import struct
import sys
import zlib

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "fixtures", "e2e")
RATE = 48000


def wav_bytes(rate, channels):
    frames = len(channels[0])
    data = bytearray()
    for n in range(frames):
        for ch in channels:
            data += struct.pack("<h", ch[n])
    nch = len(channels)
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, nch, rate, rate * nch * 2, nch * 2, 16)
    header += b"data" + struct.pack("<I", len(data))
    return bytes(header + data)


def png_bytes(width, height):
    def chunk(tag, payload):
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    rows = bytearray()
    for y in range(height):
        rows.append(0)
        for x in range(width):
            rows += bytes(((x * 4) % 256, (y * 5) % 256, 128))
    ihdr = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(bytes(rows), 9)) + chunk(b"IEND", b"")


# --- assets (integer PCM) -------------------------------------------------

def music():
    # 1.2 s at 44.1 kHz, stepped sawtooth
    return 44100, [[((n * 37) % 2000 - 1000) * 9 for n in range(52920)]]


def ambient():
    # 0.25 s stereo pseudo-noise from a 32-bit LCG
    state = 12345
    left, right = [], []
    for _ in range(12000):
        state = (state * 1103515245 + 12345) % (1 << 31)
        left.append(state % 6001 - 3000)
        state = (state * 1103515245 + 12345) % (1 << 31)
        right.append(state % 6001 - 3000)
    return 48000, [left, right]


def bark():
    # 0.3 s decaying square, 200-sample period
    out = []
    for n in range(14400):
        amp = 14000 * (60 - n // 240) // 60
        out.append(amp if (n // 100) % 2 == 0 else -amp)
    return 48000, [out]


def chirp():
    # 0.25 s at 22.05 kHz, sawtooth
    return 22050, [[(n % 50) * 400 - 10000 for n in range(5513)]]


ASSETS = [
    ("snd-000001", "music", ["piano", "calm"], False, music),
    ("snd-000002", "ambient", ["park"], True, ambient),
    ("snd-000003", "effect", ["dog", "bark"], False, bark),
    ("snd-000004", "effect", ["bird", "chirp"], False, chirp),
]

TIMELINE = {
    "music_asset": "snd-000001",
    "music_gain": 0.8,
    "ambient_asset": "snd-000002",
    "ambient_gain": 0.5,
    "events": [
        {"offset_ms": 0, "object_id": "obj-1", "asset_id": "snd-000003", "gain": 1.0},
        {"offset_ms": 400, "object_id": "obj-2", "asset_id": "snd-000004", "gain": 0.75},
        {"offset_ms": 900, "object_id": "obj-1", "asset_id": "snd-000003", "gain": 0.5},
    ],
    "duration_ms": 1200,
}

ANNOTATIONS = [
    {"label": "dog", "x": 4, "y": 20, "w": 24, "h": 20, "confidence": 0.92},
    {"label": "bird", "x": 40, "y": 4, "w": 14, "h": 10, "confidence": 0.81},
]


# --- reference mixer ------------------------------------------------------

def to_float(channels):
    return [[v / 32768.0 for v in ch] for ch in channels]


def resample(rate, channels, dst):
    if rate == dst:
        return channels
    n = len(channels[0])
    out_len = (n * dst + rate // 2) // rate
    out = []
    for ch in channels:
        res = []
        for k in range(out_len):
            num = k * rate
            i = num // dst
            if i + 1 >= len(ch):
                res.append(ch[-1])
                continue
            frac = (num % dst) / dst
            a = ch[i]
            res.append(a + (ch[i + 1] - a) * frac)
        out.append(res)
    return out


def samples_for_ms(ms, rate):
    return (ms * rate + 500) // 1000


def pick(channels, c):
    return channels[0] if len(channels) == 1 else channels[c]


def round_half_away(x):
    a = abs(x)
    r = math.floor(a)
    if a - r >= 0.5:
        r += 1
    return int(r) if x >= 0 else -int(r)


def render(timeline, decoded):
    length = samples_for_ms(timeline["duration_ms"], RATE)
    layers = {aid: resample(rate, to_float(chs), RATE) for aid, (rate, chs) in decoded.items()}
    out = [[0.0] * length for _ in range(2)]
    m = layers[timeline["music_asset"]]
    for c in range(2):
        src = pick(m, c)
        for n in range(min(length, len(src))):
            out[c][n] += timeline["music_gain"] * src[n]
    a = layers[timeline["ambient_asset"]]
    for c in range(2):
        bed = pick(a, c)
        for n in range(length):
            out[c][n] += timeline["ambient_gain"] * bed[n % len(bed)]
    for ev in timeline["events"]:
        fx = layers[ev["asset_id"]]
        start = samples_for_ms(ev["offset_ms"], RATE)
        for c in range(2):
            src = pick(fx, c)
            for i in range(min(len(src), max(0, length - start))):
                out[c][start + i] += ev["gain"] * src[i]
    pcm = []
    for n in range(length):
        for c in range(2):
            s = min(1.0, max(-1.0, out[c][n]))
            pcm.append(round_half_away(s * 32767.0))
    frames = [[pcm[2 * n] for n in range(length)], [pcm[2 * n + 1] for n in range(length)]]
    return wav_bytes(RATE, frames)


def dump(path, value):
    with open(path, "w") as f:
        json.dump(value, f, indent=2, sort_keys=True)
        f.write("\n")


def main():
    catalog_dir = os.path.join(ROOT, "catalog")
    os.makedirs(os.path.join(catalog_dir, "payloads"), exist_ok=True)
    decoded = {}
    manifest = []
    for aid, role, labels, loopable, gen in ASSETS:
        rate, chs = gen()
        decoded[aid] = (rate, chs)
        with open(os.path.join(catalog_dir, "payloads", aid + ".wav"), "wb") as f:
            f.write(wav_bytes(rate, chs))
        frames = len(chs[0])
        manifest.append({
            "id": aid,
            "role": role,
            "labels": labels,
            "loopable": loopable,
            "duration_ms": (frames * 1000 + rate // 2) // rate,
            "sample_rate": rate,
            "channels": len(chs),
            "payload": "payloads/%s.wav" % aid,
        })
    dump(os.path.join(catalog_dir, "catalog.json"), manifest)

    png = png_bytes(64, 48)
    digest = hashlib.sha256(png).hexdigest()
    image_id = "img-" + digest[:16]
    os.makedirs(os.path.join(ROOT, "annotations"), exist_ok=True)
    with open(os.path.join(ROOT, "scene.png"), "wb") as f:
        f.write(png)
    dump(os.path.join(ROOT, "annotations", digest + ".annotations.json"), ANNOTATIONS)

    pid = "prj-fixture"
    pdir = os.path.join(ROOT, "projects", pid)
    os.makedirs(os.path.join(pdir, "assets"), exist_ok=True)
    os.makedirs(os.path.join(pdir, "renders"), exist_ok=True)
    with open(os.path.join(pdir, "assets", image_id + ".png"), "wb") as f:
        f.write(png)
    objects = [
        {
            "id": "obj-%d" % (i + 1),
            "box": {k: a[k] for k in ("x", "y", "w", "h")},
            "label": a["label"],
            "confidence": a["confidence"],
            "source": "auto",
        }
        for i, a in enumerate(ANNOTATIONS)
    ]
    project = {
        "id": pid,
        "created_at_ms": 1700000000000,
        "scene": {
            "image": {"id": image_id, "width": 64, "height": 48, "format": "png", "content_hash": digest},
            "objects": objects,
        },
        "bindings": {
            "obj-1": {"object_id": "obj-1", "asset_id": "snd-000003", "gain": 1.0},
            "obj-2": {"object_id": "obj-2", "asset_id": "snd-000004", "gain": 0.75},
        },
        "dialogue": {
            "state": "described",
            "turns": [
                {"role": "agent", "text": "A scene containing: bird, dog.", "timestamp_ms": 1700000000100},
                {"role": "agent", "text": "What kind of sound memory do you want to create?", "timestamp_ms": 1700000000100},
            ],
            "brief": None,
            "feedback": [],
            "rounds": [],
            "selected_option": None,
        },
        "timeline": TIMELINE,
        "session": {
            "id": "ses-1000",
            "project_id": pid,
            "state": "stopped",
            "start_wall_ms": 1000,
            "timeline": TIMELINE,
        },
        "renders": {},
    }
    dump(os.path.join(pdir, "project.json"), project)

    with open(os.path.join(ROOT, "golden.wav"), "wb") as f:
        f.write(render(TIMELINE, decoded))
    print("wrote", os.path.normpath(ROOT), file=sys.stderr)


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Writes data/cdx_dm_video_fixture.txt, a synthetic CDX index for video.twimg.com.

102 distinct well-formed DM ids, one truncated capture, captures of the
study id, and some public-video lines that a dm_video/ prefix query must
skip. Output is deterministic.
"""
import base64
import datetime as dt
import hashlib
import random
import sys
from pathlib import Path

STUDY_ID = 1600877027330064385
TWEPOCH_MS = 1288834974657
EARLIEST = "20160304122159"
EARLIEST_ID = 702847370918940672

rng = random.Random(20221208)
ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_-"


def snowflake_time(i):
    return dt.datetime.fromtimestamp(((i >> 22) + TWEPOCH_MS) / 1000, dt.timezone.utc)


def snowflake_at(when):
    ms = int(when.timestamp() * 1000) - TWEPOCH_MS
    return (ms << 22) | (rng.randrange(32) << 17) | (rng.randrange(32) << 12) | rng.randrange(4096)


def stamp(when):
    return when.strftime("%Y%m%d%H%M%S")


def name(n=16):
    return "".join(rng.choice(ALPHABET) for _ in range(n))


def digest(text):
    return base64.b32encode(hashlib.sha1(text.encode()).digest()).decode().rstrip("=")


def urlkey(original):
    rest = original.split("://", 1)[1]
    host, _, path = rest.partition("/")
    labels = host.lower().split(".")
    if labels[0] == "www":
        labels = labels[1:]
    return ",".join(reversed(labels)) + ")/" + path.lower()


def line(original, when, mime="video/mp4", status="200", length=None):
    if length is None:
        length = str(rng.randrange(40_000, 4_000_000))
    return " ".join([urlkey(original), when, original, mime, status, digest(original + when), length])


def main(out_path):
    lines = []
    assert stamp(snowflake_time(EARLIEST_ID) + dt.timedelta(minutes=1)) <= EARLIEST

    # Oldest capture uses the flat "<id>.mp4" form.
    lines.append(line(f"https://video.twimg.com/dm_video/{EARLIEST_ID}.mp4?_=1", EARLIEST))

    first = dt.datetime(2016, 3, 5, tzinfo=dt.timezone.utc)
    last = dt.datetime(2022, 11, 20, tzinfo=dt.timezone.utc)
    span = (last - first).total_seconds()
    ids = {EARLIEST_ID}
    while len(ids) < 102:
        created = first + dt.timedelta(seconds=rng.random() * span)
        i = snowflake_at(created)
        if i in ids:
            continue
        ids.add(i)
        for _ in range(rng.choice([1, 1, 1, 2, 2, 3, 4])):
            seen = created + dt.timedelta(seconds=rng.randrange(60, 400 * 86400))
            seen = min(seen, dt.datetime(2022, 12, 1, tzinfo=dt.timezone.utc))
            scheme = rng.choice(["https", "https", "https", "http"])
            if created.year < 2017 and rng.random() < 0.5:
                path = f"{i}.mp4"
            elif rng.random() < 0.2:
                path = f"{i}/vid/0/3000/320x180/{name()}.m4s"
            else:
                size = rng.choice(["480x480", "720x1280", "320x568", "640x360"])
                path = f"{i}/vid/{size}/{name()}.mp4?tag=1"
            lines.append(line(f"{scheme}://video.twimg.com/dm_video/{path}", stamp(seen)))

    # A truncated original whose capture is an archived 404.
    lines.append(line("http://video.twimg.com/dm_video/13443", "20201231013750", "text/html", "404", "512"))

    # The study id's own captures.
    study_parts = ["pl/320x180/Vn4h391lbQ0jfr1D.m3u8?container=fmp4",
                   "vid/0/0/320x180/jZY0JeLERXPOC4qe.mp4",
                   "vid/0/3000/320x180/1lmZtezFzjRRYziE.m4s",
                   "vid/30000/32100/320x180/yFOkibojJs9PWhkX.m4s"]
    for k, part in enumerate(study_parts):
        lines.append(line(f"https://video.twimg.com/dm_video/{STUDY_ID}/{part}", f"2022120819434{k + 2}"))

    # Public videos share the host but not the prefix.
    lines.append(line("https://video.twimg.com/ext_tw_video/560070131976392705/pu/vid/480x480/aaaa.mp4",
                      "20150127171014"))
    for _ in range(6):
        when = dt.datetime(2016, 1, 1, tzinfo=dt.timezone.utc) + dt.timedelta(days=rng.randrange(2400))
        lines.append(line(f"https://video.twimg.com/ext_tw_video/{snowflake_at(when)}/pu/vid/640x360/{name()}.mp4",
                          stamp(when)))

    lines.sort(key=lambda l: (l.split(" ")[0], l.split(" ")[1]))
    for l in lines:
        ts = l.split(" ")[1]
        assert ts >= EARLIEST or "ext_tw_video" in l, l
    Path(out_path).write_text("\n".join(lines) + "\n")
    print(f"{out_path}: {len(lines)} lines, {len(ids)} dm ids")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/cdx_dm_video_fixture.txt")

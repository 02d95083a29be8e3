#!/usr/bin/env python3
"""Runs the awk | grep | sort -u shell pipeline over the CDX fixture and checks its output."""
import os
import subprocess
import sys

PIPELINE = (
    "awk '{{print \"https://web.archive.org/web/\" $2 \"/\" $3}};' | grep -v \"1600877027330064385\" "
    "| sort -n -k 10 -t \"/\" -u"
)


def main(path):
    with open(path) as f:
        # what a prefix query for video.twimg.com/dm_video/ would return
        lines = [l for l in f if l.split(" ")[0].startswith("com,twimg,video)/dm_video/")]
    env = dict(os.environ, LC_ALL="C")
    out = subprocess.run(["sh", "-c", PIPELINE], input="".join(lines), capture_output=True, text=True, env=env,
                         check=True).stdout.splitlines()
    ok = True

    def expect(cond, what):
        nonlocal ok
        print(("ok   " if cond else "FAIL ") + what)
        ok = ok and cond

    expect(len(out) == 103, "pipeline prints 103 lines (got %d)" % len(out))
    expect(out[:1] == ["https://web.archive.org/web/20201231013750/http://video.twimg.com/dm_video/13443"],
           "first line is the truncated capture")
    second = out[1] if len(out) > 1 else ""
    expect(second.startswith("https://web.archive.org/web/20160304122159/https://video.twimg.com/dm_video/70284737")
           and second.endswith(".mp4?_=1"), "second line is the 2016-03-04 capture")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1]))

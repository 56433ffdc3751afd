"""bridge --bind HOST:PORT --generator {passthrough|recolor}"""

from __future__ import annotations

import argparse
import logging
import sys

from .server import serve


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(
        prog="bridge", description="Reference remote-generator service")
    parser.add_argument("--bind", default="127.0.0.1:8765", metavar="HOST:PORT")
    parser.add_argument("--generator", choices=["passthrough", "recolor"],
                        default="passthrough")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        serve(args.bind, args.generator)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()

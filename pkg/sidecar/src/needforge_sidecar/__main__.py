"""CLI entry point: `needforge-sidecar [--config sidecar.yaml] [--port 8400]`."""

import argparse

import uvicorn

from .app import SidecarConfig, create_app, load_config


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", help="YAML config: backend, model_id, dim, max_chars")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8400)
    args = parser.parse_args(argv)
    config = load_config(args.config) if args.config else SidecarConfig()
    uvicorn.run(create_app(config), host=args.host, port=args.port)


if __name__ == "__main__":
    main()

# tool_server.py
"""Serve the bundled tool registry over a local socket (tools/list, tools/call)."""
import logging

import click

from core.store import DEFAULT_REGISTRY
from tools.host import load_registry
from tools.wire import MockToolServer


@click.command()
@click.option("--registry", "registry_path", type=click.Path(exists=True, dir_okay=False),
              default=str(DEFAULT_REGISTRY), show_default=True)
@click.option("--bind", default="127.0.0.1", show_default=True)
@click.option("--port", type=click.IntRange(0, 65535), default=8765, show_default=True)
@click.option("--distractors", type=click.IntRange(min=0), default=0,
              help="Also serve this many generated distractor tools.")
def main(registry_path, bind, port, distractors):
    logging.basicConfig(level=logging.INFO, format="[%(name)s] %(message)s")
    host = load_registry(registry_path)
    if distractors:
        host.ensure_noise(distractors)
    server = MockToolServer(host, bind, port)
    click.echo(f"serving {len(host)} tools on {server.address[0]}:{server.address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        click.echo("shutting down")
    finally:
        server.stop()


if __name__ == "__main__":
    main()

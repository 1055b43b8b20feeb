"""Entry point: `python -m affshim` or the `affshim` console script."""

import uvicorn

from .app import create_app
from .config import ShimConfig


def main() -> None:
    config = ShimConfig.from_env()
    uvicorn.run(create_app(config), host=config.host, port=config.port)


if __name__ == "__main__":
    main()

"""Allow running the CLI as a module: python -m seqmia"""

from .cli import run

if __name__ == "__main__":
    run()

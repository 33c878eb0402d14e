"""Fine-tuning with a drift penalty against a frozen pretrained encoder."""

try:
    from ._simtune import *  # noqa: F401,F403
    from ._simtune import __version__
except ImportError:  # in-tree build: the extension sits next to, not inside, the package
    from _simtune import *  # noqa: F401,F403
    from _simtune import __version__

import logging
from typing import Optional, Union

import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.theme import Theme

theme = Theme({
    "error": "bold red",
    "warning": "yellow",
    "info": "cyan",
    "success": "bold green"
})

console = Console(theme=theme, highlight=True, stderr=True)

logging.basicConfig(
    level=logging.INFO,
    format="%(message)s",
    datefmt="[%X]",
    handlers=[RichHandler(console=console)]
)
logger = logging.getLogger("plsm")


class PlsmError(Exception):
    """Base class for errors raised by the plsm toolkit."""


def make_rng(seed: Optional[Union[int, np.random.Generator]] = None) -> np.random.Generator:
    """Return a numpy Generator; passing a Generator through leaves it untouched."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_seed(seed: int, *keys: int) -> int:
    """
    Derive a child seed from a root seed and integer keys.

    Used wherever work is fanned out (folds, replications) so each task owns
    its own stream regardless of worker count.
    """
    entropy = [int(seed)] + [int(k) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])

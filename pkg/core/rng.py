"""
Deterministic random streams.

Every random draw in a simulation comes from a stream identified by the tuple
(root seed, purpose, client, round). The tuple is hashed into the key of a
counter-based Philox generator, so a draw depends only on its tuple and never
on the order in which streams are created or consumed. That is what makes a
run replayable bit for bit, and what lets per-client work run in any order.
"""

# Standard Library Imports
import hashlib
from dataclasses import dataclass

# Third-Party Imports
import numpy as np

# Client index used for streams that draw one value per client at once.
ALL_CLIENTS = -1

_KEY_BYTES = 16  # Philox keys are 128 bits.


@dataclass(frozen=True)
class RngStream:
    """
    Identifies one substream. The stream itself is created on demand by
    :meth:`generator`; each call returns a fresh generator positioned at the
    start of the stream.
    """
    root_seed: int
    purpose: str
    client: int = ALL_CLIENTS
    round: int = 0

    @property
    def key(self) -> int:
        payload = f"{self.root_seed}|{self.purpose}|{self.client}|{self.round}".encode()
        digest = hashlib.blake2b(payload, digest_size=_KEY_BYTES).digest()
        return int.from_bytes(digest, 'little')

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key))


def derive_stream(root_seed: int, purpose: str, client: int = ALL_CLIENTS, round_: int = 0) -> RngStream:
    """
    Returns the substream for (root_seed, purpose, client, round).

    Distinct tuples give independent streams; identical tuples always give
    the same stream.
    """
    return RngStream(int(root_seed), str(purpose), int(client), int(round_))


def as_generator(rng) -> np.random.Generator:
    """Accepts an RngStream or an already created generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"Expected an RngStream or a numpy Generator, got {type(rng).__name__}.")

"""Construction of a ring of site endpoints on one machine."""

from __future__ import annotations

from ..transport.config import ChannelConfig
from ..transport.simulated import VirtualClock, sim_pair
from ..transport.tcp import tcp_pair
from .protocol import SiteEndpoint


def build_ring(s: int, config: ChannelConfig, clocks=None, wan: bool = True) -> list[SiteEndpoint]:
    """Endpoints for ``s`` sites joined in a ring.

    Link ``i`` joins the right end of site ``i`` to the left end of site
    ``i + 1`` (mod ``s``), so two sites share two distinct links.  With the
    simulated backend both ends of a site run on that site's clock.
    """
    if s < 1:
        raise ValueError("a ring needs at least one site")
    if s == 1:
        return [SiteEndpoint(0, 1, wan=wan)]
    if config.backend == "simulated":
        clocks = list(clocks) if clocks is not None else [VirtualClock() for _ in range(s)]
        if len(clocks) != s:
            raise ValueError("need one clock per site")
    rights, lefts = [None] * s, [None] * s
    for i in range(s):
        j = (i + 1) % s
        if config.backend == "simulated":
            rights[i], lefts[j] = sim_pair(config, clocks[i], clocks[j], channel_id=i)
        else:
            rights[i], lefts[j] = tcp_pair(config, channel_id=i)
    return [SiteEndpoint(i, s, lefts[i], rights[i], wan) for i in range(s)]


def close_ring(endpoints) -> None:
    for ep in endpoints:
        for ch in (ep.left, ep.right):
            if ch is not None:
                ch.close()

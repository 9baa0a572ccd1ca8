"""Message channels: deterministic simulated WAN and parallel-stream TCP."""

from .base import Channel, ExchangeTiming, WallClock
from .config import PROFILES, ChannelConfig, TransportError, profile, simulated_delivery_time
from .frame import HEADER, FrameHeader, decode_frames, encode_frames, join_slices, split_message, unpack_header
from .netbench import NetbenchResult, netbench, netbench_responder, write_netbench_csv
from .relay import TcpRelay, relay_chain
from .simulated import SimChannel, SimRelay, VirtualClock, path_delivery_time, sim_chain, sim_pair
from .tcp import TcpChannel, TcpListener, connect_channel, tcp_pair


def open_channel(config: ChannelConfig, address=None, channel_id: int = 0, clock=None):
    """Client end of a channel.

    For the tcp backend this connects to ``address``.  For the simulated
    backend there is no address; a connected pair is created and the far
    end is returned as the second element so the caller can hand it to
    the peer driver.
    """
    if config.backend == "tcp":
        if address is None:
            raise ValueError("tcp backend needs an address")
        return connect_channel(address, config, channel_id)
    return sim_pair(config, clock, None, channel_id)


__all__ = [
    "HEADER",
    "PROFILES",
    "Channel",
    "ChannelConfig",
    "ExchangeTiming",
    "FrameHeader",
    "NetbenchResult",
    "SimChannel",
    "SimRelay",
    "TcpChannel",
    "TcpListener",
    "TcpRelay",
    "TransportError",
    "VirtualClock",
    "WallClock",
    "connect_channel",
    "decode_frames",
    "encode_frames",
    "join_slices",
    "netbench",
    "netbench_responder",
    "open_channel",
    "path_delivery_time",
    "profile",
    "relay_chain",
    "sim_chain",
    "sim_pair",
    "simulated_delivery_time",
    "split_message",
    "tcp_pair",
    "unpack_header",
    "write_netbench_csv",
]

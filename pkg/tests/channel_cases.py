"""Random channel generation shared across the test modules."""

from arqsched.channel import ChannelParams


def random_channels(rng, count, gap_range=(0.05, 0.9), p11_range=(0.1, 0.98)):
    """Positively correlated channels with memory p11 - p01 in gap_range."""
    out = []
    while len(out) < count:
        p11 = rng.uniform(*p11_range)
        gap = rng.uniform(*gap_range)
        p01 = p11 - gap
        if p01 > 1e-3 and p11 < 1.0 - 1e-6:
            out.append(ChannelParams(float(p11), float(p01)))
    return out

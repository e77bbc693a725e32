import pytest

from tdoa_dtb.geometry import NodeCatalog, Position
from tdoa_dtb.synthetic import ClockModel, Scenario


def square_catalog(side=20.0):
    return NodeCatalog({
        "1": Position(0.0, 0.0),
        "2": Position(side, 0.0),
        "3": Position(side, side),
        "4": Position(0.0, side),
    })


def eight_node_catalog(side=30.0):
    half = side / 2.0
    return NodeCatalog({
        "1": Position(0.0, 0.0),
        "2": Position(half, 0.0),
        "3": Position(side, 0.0),
        "4": Position(side, half),
        "5": Position(side, side),
        "6": Position(half, side),
        "7": Position(0.0, side),
        "8": Position(0.0, half),
    })


def loop_waypoints(side=30.0, inset=5.0):
    a, b = inset, side - inset
    return [(a, a), (b, a), (b, b), (a, b), (a, a)]


@pytest.fixture
def basic_scenario():
    """Small noiseless scenario with known biases, used across modules."""
    return Scenario(
        catalog=square_catalog(),
        node_biases={"1": 2.0, "2": 5.0, "3": 0.0, "4": -3.0},
        rover_clock=ClockModel(),
        waypoints=[(5.0, 5.0), (15.0, 5.0), (15.0, 15.0), (5.0, 15.0)],
        speed=1.0,
        epoch_rate=2.0,
        noise=0.0,
        seed=7,
    )

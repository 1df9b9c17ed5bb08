"""Exception types shared across the toolkit."""


class FabricError(Exception):
    """Base class for all cgrafab errors."""


# --- graph construction -----------------------------------------------------

class OutOfBounds(FabricError):
    pass


class UnknownLayer(FabricError):
    pass


class UnknownNode(FabricError):
    pass


class LayerMismatch(FabricError):
    pass


class SelfLoop(FabricError):
    pass


class GraphFrozen(FabricError):
    pass


class InvalidSpec(FabricError):
    pass


class EmptyPolicy(FabricError):
    pass


class SameSide(FabricError):
    pass


class ParseError(FabricError):
    """Malformed text input. Carries 1-based line/column of the offense."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", col {column}" if column is not None else "") + ")"
        super().__init__(message + loc)


# --- lowering / netlist -----------------------------------------------------

class InvalidGraph(FabricError):
    pass


class NoRegisters(FabricError):
    pass


class MalformedOneHot(FabricError):
    pass


class UnknownPrimitive(FabricError):
    pass


# --- application packing ----------------------------------------------------

class MultiplyDrivenNet(FabricError):
    pass


class DanglingPort(FabricError):
    pass


# --- placement ---------------------------------------------------------------

class UnplacedPin(FabricError):
    pass


class InsufficientCapacity(FabricError):
    pass


class NoAnchors(FabricError):
    pass


# --- routing / timing ---------------------------------------------------------

class CombinationalLoop(FabricError):
    pass


class Unreachable(FabricError):
    pass


class UnroutableSink(FabricError):
    pass


class RoutingFailed(FabricError):
    def __init__(self, message, iterations, remaining_overuse):
        self.iterations = iterations
        self.remaining_overuse = remaining_overuse
        super().__init__(f"{message} after {iterations} iterations "
                         f"({remaining_overuse} overused nodes)")


class AllFailed(FabricError):
    pass


# --- bitstream ----------------------------------------------------------------

class FieldConflict(FabricError):
    pass


class UnknownField(FabricError):
    pass


class BadAddress(FabricError):
    pass


class SelectOutOfRange(FabricError):
    pass

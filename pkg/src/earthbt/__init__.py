"""Multi-machine earthwork planning: action sequences, synchronization flags,
behavior trees and a discrete-tick site simulator."""

__version__ = "0.1.0"

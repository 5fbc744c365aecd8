"""netplane: a user-space multiserver networking dataplane simulation.

Applications run their own transport stacks; a restartable network server
relays L2 frames over lock-free SPSC ring channels under a supervisor-held
port routing table; applications switch between server-relayed and
direct-device modes at runtime without dropping connections.
"""

__version__ = "0.1.0"

"""Start a live session for the browser operator console.

Runs the streaming service with a ready-made swarm and prints how to open
the console. Steer with the yaw compass, add pitch to make the swarm
roll, draw an ROI to watch the rotation-locked intensity modulation, or
click waypoints to hand control to the onboard navigator.
"""

import sys

from sonoswarm.service import main

if __name__ == "__main__":
    print("open frontend/index.html in a browser once the service is up")
    print("(see frontend/README.md for building the console)")
    sys.exit(main(["--listen", "127.0.0.1:8787", "--start-running", *sys.argv[1:]]))

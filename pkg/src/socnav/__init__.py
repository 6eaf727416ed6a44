"""2D social-navigation workbench.

Core pieces: a unicycle robot with simulated LiDAR, social-force pedestrians,
elevator co-boarding scenarios, density-based reward learning from labeled
demonstrations, a sampling-based lookahead teacher controller, and
mixture-density student policies distilled via dataset aggregation.
"""

__version__ = "0.1.0"

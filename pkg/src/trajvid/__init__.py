"""trajvid: trajectory-controllable image-to-video generation at desk scale."""

__version__ = "0.1.0"

"""bibcorpus: build, enrich, and analyze a bibliographic corpus from XML releases."""

__version__ = "0.1.0"

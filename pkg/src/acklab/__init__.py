"""acklab: a laboratory for extracting and classifying acknowledged entities
(funders, grant numbers, people, universities, corporations, miscellaneous)
from scientific acknowledgement texts."""

__version__ = "0.1.0"

"""
Services for yield data ingest, sampling, downstream models and experiments
"""

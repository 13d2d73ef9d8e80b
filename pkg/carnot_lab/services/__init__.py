from .verification_service import CHECK_IDS, VerificationService

__all__ = ["CHECK_IDS", "VerificationService"]

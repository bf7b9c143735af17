/**
 * Errors surfaced from the primary implementation keep their exit-code
 * taxonomy: 2 validation, 3 geometry, 4 empty region.
 */

export class PrimaryError extends Error {
  readonly code: number;

  constructor(code: number, message: string) {
    super(message);
    this.name = "PrimaryError";
    this.code = code;
  }
}

export class ValidationError extends PrimaryError {
  constructor(message: string) {
    super(2, message);
    this.name = "ValidationError";
  }
}

export class GeometryError extends PrimaryError {
  constructor(message: string) {
    super(3, message);
    this.name = "GeometryError";
  }
}

export class EmptyRegionError extends PrimaryError {
  constructor(message: string) {
    super(4, message);
    this.name = "EmptyRegionError";
  }
}

export function primaryErrorFrom(code: number, message: string): PrimaryError {
  switch (code) {
    case 2:
      return new ValidationError(message);
    case 3:
      return new GeometryError(message);
    case 4:
      return new EmptyRegionError(message);
    default:
      return new PrimaryError(code, message);
  }
}

/** Anonymous session token, generated client-side and persisted locally. */

const STORAGE_KEY = "kgquiz.session";

let inMemoryToken: string | null = null;

function generateToken(): string {
  if (typeof crypto !== "undefined" && "randomUUID" in crypto) {
    return crypto.randomUUID();
  }
  return `s-${Date.now()}-${Math.floor(Math.random() * 1e9)}`;
}

export function getSessionToken(): string {
  try {
    const existing = window.localStorage.getItem(STORAGE_KEY);
    if (existing) return existing;
    const token = generateToken();
    window.localStorage.setItem(STORAGE_KEY, token);
    return token;
  } catch {
    // storage unavailable (private mode); keep one token per page load
    if (inMemoryToken === null) inMemoryToken = generateToken();
    return inMemoryToken;
  }
}
